"""Anomaly detection for IoMT network flow records.

Point detectors (autoencoder, isolation forest, one-class SVM, KNN),
window classifiers (LSTM, GRU, CNN-LSTM, logistic regression), a
second-order boosted-tree learner, stacking and voting ensembles, metrics
and report rendering, and a synthetic traffic generator. Plain numpy.
"""
__version__ = "0.1.0"
