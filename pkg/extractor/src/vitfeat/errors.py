class VitfeatError(Exception):
    """Base class for extractor errors."""


class ModelLoadError(VitfeatError):
    """Unknown architecture or incompatible checkpoint."""


class ImageDecodeError(VitfeatError):
    """An input image could not be read or decoded."""
