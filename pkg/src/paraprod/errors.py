"""Exception types shared across the package."""


class ParaprodError(Exception):
    pass


class NyquistOverflow(ParaprodError, ValueError):
    """A frequency window does not fit inside the grid's Nyquist band."""


class EmptyRange(ParaprodError, ValueError):
    """No scale index j satisfies the grid constraints."""


class ScaleOutOfRange(ParaprodError, ValueError):
    pass


class AdmissibilityViolation(ParaprodError):
    def __init__(self, label, clauses):
        self.label = label
        self.clauses = list(clauses)
        super().__init__(f"form {label!r} violates: " + "; ".join(self.clauses))


class BranchMismatch(ParaprodError, ValueError):
    """Tree tiles do not lie in the S^(1)/S^(2) branch requested."""


class AllTrialsDegenerate(ParaprodError, RuntimeError):
    pass
