"""Exception taxonomy shared across the pipeline.

Every error carries a stable ``category`` slug; the CLI prefixes messages
with it so failures are machine-greppable.
"""


class PipelineError(Exception):
    category = "error"


class ShapeError(PipelineError):
    category = "shape-error"


class NumericError(PipelineError):
    category = "numeric-error"


class ParameterError(PipelineError):
    category = "parameter-error"


class ContractError(PipelineError):
    category = "contract-error"


class FormatError(PipelineError):
    category = "format-error"


class GenerationError(PipelineError):
    category = "generation-error"


class ConfigError(PipelineError):
    category = "config-error"


class DataIOError(PipelineError):
    category = "io-error"
