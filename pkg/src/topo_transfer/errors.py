"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map error classes to
distinct process exit statuses without a lookup table.
"""

from __future__ import annotations


class TopoTransferError(Exception):
    exit_code = 1
    module = "topo_transfer"

    def __str__(self) -> str:
        return f"[{self.module}] {super().__str__()}"


# -- core_types -------------------------------------------------------------


class SampleSetError(TopoTransferError):
    """A SampleSet violates one of its point invariants."""

    exit_code = 4
    module = "core_types"

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message)
        self.index = index


class DimensionMismatchError(SampleSetError):
    pass


class NonFiniteFeatureError(SampleSetError):
    pass


class LabelOutOfRangeError(SampleSetError):
    pass


# -- io_ingest --------------------------------------------------------------


class IngestError(TopoTransferError):
    exit_code = 3
    module = "io_ingest"


class MissingFileError(IngestError):
    def __init__(self, path):
        super().__init__(f"missing file: {path}")
        self.path = path


class MalformedManifestError(IngestError):
    pass


class DuplicateModelError(IngestError):
    pass


class ShapeMismatchError(IngestError):
    pass


class LabelRangeError(IngestError):
    pass


# -- algorithmic modules ----------------------------------------------------


class SamplingError(TopoTransferError):
    exit_code = 4
    module = "sampling"


class GraphError(TopoTransferError):
    exit_code = 4
    module = "graph_mst"


class GrtdError(TopoTransferError):
    exit_code = 4
    module = "grtd"


class NoValidPatchError(TopoTransferError):
    exit_code = 8
    module = "lbtc"


class LbtcError(TopoTransferError):
    exit_code = 4
    module = "lbtc"


class FusionError(TopoTransferError):
    exit_code = 5
    module = "fusion"


class TooFewModelsError(FusionError):
    pass


class RankingError(TopoTransferError):
    exit_code = 6
    module = "rank_eval"


class UndefinedCorrelationError(RankingError):
    pass


class MissingTruthError(RankingError):
    exit_code = 7

    def __init__(self, message: str, model_id: str | None = None):
        super().__init__(message)
        self.model_id = model_id


class ConfigError(TopoTransferError):
    exit_code = 2
    module = "cli"
