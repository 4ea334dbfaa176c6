"""Multi-view CNN acoustic species classification for sensor networks.

Node-side DSP preprocessing, a from-scratch three-view convolutional
classifier with autograd, KNN baselines, a cross-validation/sweep
harness and a node-to-server offload simulator. See README.md for the
command-line interface.
"""

__version__ = "0.1.0"
