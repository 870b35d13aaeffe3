"""Exception hierarchy shared across the package."""


class AgriplotError(Exception):
    """Base class for all domain errors."""


# --- plot registry ---

class MalformedPlotId(AgriplotError):
    pass


class PlotNotFound(AgriplotError):
    pass


class RegistryUnreachable(AgriplotError):
    pass


class RegistryResponseInvalid(AgriplotError):
    pass


# --- raster engine ---

class GridParseError(AgriplotError):
    pass


class MissingBand(AgriplotError):
    pass


class EmptyInput(AgriplotError):
    pass


class GeoreferenceMismatch(AgriplotError):
    pass


class NoValidPixels(AgriplotError):
    pass


class EndpointUnreachable(AgriplotError):
    pass


class InvalidStacResponse(AgriplotError):
    pass


# --- orthophoto / WMS ---

class DegenerateGeometry(AgriplotError):
    pass


class WmsUnreachable(AgriplotError):
    pass


class WmsError(AgriplotError):
    pass


class UnexpectedContentType(AgriplotError):
    pass


class EmptyModelResponse(AgriplotError):
    pass


# --- RAG store ---

class EmbeddingFailed(AgriplotError):
    pass


class DuplicateDocId(AgriplotError):
    """Re-ingesting an existing doc_id without the replace flag."""


class DimensionMismatch(AgriplotError):
    pass


class ZeroVector(AgriplotError):
    pass


class EmptyIndex(AgriplotError):
    pass


class RerankerFailed(AgriplotError):
    pass


class OutOfRange(AgriplotError):
    pass


# --- aggregator ---

class ModeComponentMismatch(AgriplotError):
    pass


class ContextOverflow(AgriplotError):
    pass


# --- gateway ---

class GatewayError(AgriplotError):
    pass


class GatewayTimeout(GatewayError):
    pass


class GatewayHttpError(GatewayError):
    def __init__(self, status: int, message: str = ""):
        super().__init__(message or f"HTTP {status}")
        self.status = status


class MalformedCompletion(GatewayError):
    pass


class DimInconsistency(GatewayError):
    pass


class LengthMismatch(GatewayError):
    pass


# --- judge harness ---

class VerdictUnparsable(AgriplotError):
    pass


class ScoreOutOfRange(AgriplotError):
    pass


class MissingDimension(AgriplotError):
    pass


class AllCasesFailed(AgriplotError):
    pass
