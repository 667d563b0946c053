# utils/errors.py

class ToolkitError(Exception):
    """Base class for every error raised by the toolkit."""


class ConfigError(ToolkitError):
    pass


class CorpusError(ToolkitError):
    pass


# -------------------- code model --------------------

class SourceSyntaxError(ToolkitError):
    """Source text does not parse in the declared language."""


class MissingEntryPoint(ToolkitError):
    pass


class UnsupportedConstruct(ToolkitError):
    """A construct outside the supported language subset (try/with/switch/...)."""


class SerializationError(ToolkitError):
    """Raised only for internally inconsistent IR edits."""


class LiteralParseError(ToolkitError):
    pass


# -------------------- transforms / oracle --------------------

class UnknownOperator(ToolkitError):
    pass


class ParseRegression(ToolkitError):
    """A transformed source failed to re-parse. Never leaves the engine."""


class RuntimeUnavailable(ToolkitError):
    pass


# -------------------- model harness --------------------

class ProviderError(ToolkitError):
    pass


class TransientProviderError(ProviderError):
    """Retryable provider failure (429, 5xx, connection reset)."""


class AuthError(ProviderError):
    pass


class CacheCorruption(ToolkitError):
    pass


class MissingTest(ToolkitError):
    pass


class EmbeddingUnavailable(ToolkitError):
    pass


# -------------------- metrics / experiments --------------------

class EmptyInput(ToolkitError):
    pass


class MixedSemanticClass(ToolkitError):
    pass


class MissingCorrectnessFlags(ToolkitError):
    pass
