"""Audio-to-feature-map bridge.

Decodes audio, runs a frozen Wav2Vec2 Base backbone, and dumps selected
hidden layers as ``.trrf`` feature containers for the retrieval core. The
coupling to the core is the file format alone.
"""

__version__ = "0.1.0"

from .extract import ExtractionConfig, extract, extract_to_file, load_backbone

__all__ = ["ExtractionConfig", "extract", "extract_to_file", "load_backbone", "__version__"]
