# Core package of the hybrid beamforming toolkit
__version__ = "0.1.0"
