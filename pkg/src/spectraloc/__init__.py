"""Indoor localization from body-worn spectral light sensors.

Subpackages and modules:

* ``spectral``: sub-band layouts and spectra
* ``lightsim``: single-bounce light propagation and synthetic data
* ``scenes``: source spectra, materials and ready-made rooms
* ``dataset``: fingerprints, sensor noise, CSV logs and grouped splits
* ``preprocess``: normalization, sub-band masks and input assembly
* ``models``: the convolutional localizer, training and kNN baseline
* ``evaluation``: metrics, ablations and stress tests
* ``cli``: the ``spectraloc`` command
"""

__version__ = "0.1.0"
