"""Exception hierarchy.

Every error carries a machine-readable ``code`` and the CLI exit status it
maps to: 1 for bad input or violated preconditions, 2 for numerical
failures.
"""


class InterplabError(Exception):
    code = "INTERNAL"
    exit_code = 2

    def __init__(self, message, *, code=None, **details):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.details = details

    def to_dict(self):
        return {"code": self.code, "message": str(self), "details": self.details}


class InputError(InterplabError, ValueError):
    code = "INPUT"
    exit_code = 1


class DatasetError(InputError):
    code = "DATASET_PARSE"


class PreconditionError(InputError):
    code = "PRECONDITION"


class UnsupportedError(InputError):
    code = "UNSUPPORTED"


class NumericalError(InterplabError):
    code = "NUMERICAL"
    exit_code = 2


class ConditioningError(NumericalError):
    code = "CONDITIONING"

    def __init__(self, message, best_condition, **details):
        super().__init__(message, best_condition=best_condition, **details)
        self.best_condition = best_condition


class InfeasibleEstimate(NumericalError):
    code = "INFEASIBLE_ESTIMATE"


class NotFound(NumericalError):
    code = "NOT_FOUND"

    def __init__(self, message, best_candidate, smallest_derivative, **details):
        super().__init__(
            message,
            best_candidate=best_candidate,
            smallest_derivative=smallest_derivative,
            **details,
        )
        self.best_candidate = best_candidate
        self.smallest_derivative = smallest_derivative


class InternalError(InterplabError):
    code = "INTERNAL"
    exit_code = 2
