"""Two-qubit state tomography: linear inversion, diluted MLE, and a hybrid
estimator that regularizes correlations onto a moment-matrix relaxation first."""

__version__ = "0.1.0"
