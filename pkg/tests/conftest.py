import os

# Default location of the MNIST IDX files used by the full-pipeline tests.
os.environ.setdefault("LUTSHRINK_DATA_DIR", "/root/data/mnist")
