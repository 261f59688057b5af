"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, arguments or role assignment."""


class DataError(ValueError):
    """Input data that cannot be parsed or used."""


class RowError(DataError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class ImpossibleEvidence(ArithmeticError):
    """Observations with zero probability under the model.

    ``slice_index`` is 1-based: the first slice whose evidence has no mass.
    """

    def __init__(self, slice_index: int, case_id: str | None = None):
        self.slice_index = slice_index
        self.case_id = case_id
        where = f" in case {case_id}" if case_id is not None else ""
        super().__init__(f"impossible evidence at slice {slice_index}{where}")
