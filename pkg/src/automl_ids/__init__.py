"""Multi-objective AutoML intrusion detection: preprocessing, feature selection and model search."""
__version__ = "0.1.0"
