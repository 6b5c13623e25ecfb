"""Physics-informed fitting of a climate-modulated logistic pest model.

Subpackages and modules:

- :mod:`pcmnn.ingest` daily trap CSVs, windowing, compositing, scaling
- :mod:`pcmnn.autodiff` reverse-mode tape, MLPs, Adam
- :mod:`pcmnn.dynamics` logistic models and the RK4 integrator
- :mod:`pcmnn.prefit` Levenberg-Marquardt logistic fit
- :mod:`pcmnn.pinn` joint state/alpha network training
- :mod:`pcmnn.evaluate` metrics, back-solve, forecasting
- :mod:`pcmnn.synth` synthetic benchmark data
- :mod:`pcmnn.cli` the ``pcmnn`` command
"""

__version__ = "0.1.0"
