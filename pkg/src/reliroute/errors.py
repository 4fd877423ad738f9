"""Exception types shared across the package."""


class RelirouteError(Exception):
    """Base class for errors raised by this package."""


class GraphValidationError(RelirouteError, ValueError):
    """A graph document or synthesized network violates a structural rule.

    The message names the first offending node or edge so broken inputs can
    be located without a debugger.
    """


class SearchBudgetExceeded(RelirouteError, RuntimeError):
    """The best-first path search outgrew its configured queue limit.

    Pathological networks can force an exponential number of partial paths;
    the queue cap turns that into an explicit failure instead of an OOM.
    """
