"""Exception types shared across the pipeline."""


class MTreeError(Exception):
    """Base class for every error raised by this package."""


class EmptyInput(MTreeError):
    pass


class ExprSyntaxError(MTreeError):
    def __init__(self, position, expected, text=""):
        self.position = position
        self.expected = expected
        self.text = text
        super().__init__(f"at position {position}: expected {expected} in {text!r}")


class DivisionByZero(MTreeError, ZeroDivisionError):
    def __init__(self, where):
        self.where = where
        super().__init__(f"division by zero in {where}")


class NonNumericExponent(MTreeError):
    pass


class UnsupportedExponent(MTreeError):
    def __init__(self, exponent):
        self.exponent = exponent
        super().__init__(f"unsupported exponent {exponent!r}")


class UnknownCode(MTreeError, KeyError):
    def __init__(self, code, occurrence):
        self.code = code
        self.occurrence = occurrence
        super().__init__(f"code {code!r} of occurrence {occurrence} is not in the vocabulary")

    def __str__(self):
        return self.args[0]


class EmptyTree(MTreeError):
    pass


class InconsistentPath(MTreeError):
    pass


class InvalidRoot(MTreeError):
    pass


class SchemaError(MTreeError):
    def __init__(self, record_id, field):
        self.record_id = record_id
        self.field = field
        super().__init__(f"record {record_id!r}: missing or invalid field {field!r}")


class UnboundLiteral(MTreeError):
    def __init__(self, value):
        self.value = value
        super().__init__(f"expression literal {value} matches no problem value")


class PositionOutOfRange(MTreeError, IndexError):
    pass


class ShapeMismatch(MTreeError, ValueError):
    pass


class DivergenceDetected(MTreeError, FloatingPointError):
    pass
