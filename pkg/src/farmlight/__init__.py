"""farmlight: desk-scale edge-centric multimodal crop-diagnosis pipeline."""

__version__ = "0.1.0"
