"""Exception types raised by the pipeline stages.

Every stage failure that the harness records as a sample failure derives from
``PipelineError``; the class name is what ends up in the ``failure`` column.
"""


class PipelineError(Exception):
    """Base class for recoverable per-frame failures."""

    @property
    def reason(self):
        return type(self).__name__


class DegenerateInput(PipelineError):
    pass


class BadEllipse(PipelineError):
    pass


class EyeNotFound(PipelineError):
    pass


class LimbusNotFound(PipelineError):
    pass


class ObjectNotFound(PipelineError):
    def __init__(self, message="", objects=("device",)):
        super().__init__(message)
        self.objects = tuple(objects)

    @property
    def reason(self):
        return "ObjectNotFound:" + "+".join(self.objects)


class NoSolution(PipelineError):
    pass


class DivergentRays(PipelineError):
    pass


class NoIntersection(PipelineError):
    pass


class EmptySelection(ValueError):
    pass


class ConfigInvalid(ValueError):
    pass
