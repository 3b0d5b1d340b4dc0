"""Functional-module detection in small feedforward classifiers.

The pipeline: train (or load) a two-hidden-layer ReLU classifier, compute
eight pairwise unit-similarity matrices per hidden layer on held-out data,
turn each into a normalized graph adjacency, maximize a Newman-style
modularity over hard partitions (spectral splitting plus entropy-tempered
stochastic refinement), and compare the resulting cluster assignments
across methods with element-centric similarity.  ``modkit.experiment``
orchestrates regularization sweeps end-to-end and aggregates CSV tables;
``modkit.cli`` exposes everything as the ``modkit`` command.
"""

__version__ = "0.1.0"
