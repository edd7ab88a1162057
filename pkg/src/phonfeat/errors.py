"""Exception hierarchy shared by all modules.

``InputError`` subclasses correspond to bad user input and map to CLI exit
code 2; anything else escaping a command is an internal error (exit 1).
"""


class PhonfeatError(Exception):
    """Base class for all errors raised by this package."""


class InputError(PhonfeatError):
    """Malformed or unsupported input data."""


class UnknownSymbol(InputError):
    def __init__(self, symbol, detail=""):
        self.symbol = symbol
        msg = f"unknown symbol {symbol!r}"
        if len(symbol) == 1:
            msg += f" (U+{ord(symbol):04X})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class UnknownLanguage(InputError):
    pass


class ParseError(InputError):
    def __init__(self, line, message):
        self.line = line
        super().__init__(f"line {line}: {message}")


class FormatError(ParseError):
    pass


class InvariantViolation(InputError):
    def __init__(self, phone, reason):
        self.phone = phone
        self.reason = reason
        super().__init__(f"{phone!r}: {reason}")


class MissingTier(InputError):
    def __init__(self, tier_name):
        self.tier_name = tier_name
        super().__init__(f"no interval tier named {tier_name!r}")


class EmptyLogits(InputError):
    pass


class EmptyReference(InputError):
    pass


class LengthMismatch(InputError):
    pass


class EmptySubset(InputError):
    pass


class EmptyCorpus(InputError):
    pass


class ShapeMismatch(InputError):
    pass


class NonFiniteGradient(PhonfeatError):
    pass


class ConfigError(ParseError):
    pass
