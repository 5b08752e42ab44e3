"""Shared exception types."""


class TodsimError(Exception):
    pass


class EmptyInput(TodsimError):
    """A metric or ranking operation received no data."""


class AlignmentError(TodsimError):
    """Hypothesis and reference sequences have mismatched lengths."""


class DegenerateBase(TodsimError):
    """Error reduction is undefined when the baseline is already perfect."""


class InvalidDistribution(TodsimError):
    """Probabilities are negative or do not sum to one."""


class InvalidCounts(TodsimError):
    """Binomial test received k or n outside the valid range."""


class AgentUnavailable(TodsimError):
    """A remote agent endpoint timed out or refused the request."""


class MalformedGrounding(TodsimError):
    """An observation's grounding string does not parse for the agent's role."""


class UnknownIntent(TodsimError):
    """A goal references an intent with no matching schema."""


class SchemaMismatch(TodsimError):
    """A dialogue references an intent or slot absent from the schema file."""


class TrainerFailed(TodsimError):
    """An external trainer command exited nonzero, timed out, or emitted no checkpoint."""


class NoSuccesses(TodsimError):
    """An iteration produced zero successful dialogues."""


class InsufficientPool(TodsimError):
    """Fewer matching pool episodes remain than requested."""


class MissingEpisode(TodsimError):
    """A system has no episode for a requested goal."""
