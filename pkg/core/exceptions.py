"""
Exception hierarchy for the geometry-uncertainty toolkit
"""


class GupError(Exception):
    """Base class for every error raised by the toolkit"""

    def details(self):
        """Machine-readable context attached to the error report"""
        return {}


class DomainError(GupError, ValueError):
    """An input lies outside the domain of an operation"""


class SceneGenerationError(GupError):
    """Rejection sampling could not place the requested number of objects"""

    def __init__(self, message, achieved_count, requested_count):
        super().__init__(message)
        self.achieved_count = achieved_count
        self.requested_count = requested_count

    def details(self):
        return {'achieved_count': self.achieved_count, 'requested_count': self.requested_count}


class FitDivergedError(GupError):
    """Gradient descent produced a non-finite loss"""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step

    def details(self):
        return {'step': self.step}


class HTLGraphError(GupError):
    """The task hierarchy is cyclic or references unknown tasks"""
