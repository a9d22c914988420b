"""Exception types shared across the package."""


class EcdError(Exception):
    """Base class for all errors raised by this package."""


class MissingVariable(EcdError):
    """A referenced variable has no binding or no dataset column."""

    def __init__(self, name: str):
        super().__init__(f"variable {name!r} is not bound")
        self.name = name


class MalformedTree(EcdError):
    """An expression tree violates a structural invariant."""


class UnknownNodeId(EcdError):
    """A node id does not exist in the tree it was used against."""

    def __init__(self, node_id: int):
        super().__init__(f"node id {node_id} does not exist in this tree")
        self.node_id = node_id


class InvalidConfig(EcdError):
    """A configuration object violates one of its invariants."""


class EmptyDataset(EcdError):
    """An operation that needs rows received a dataset without enough of them."""


class EmptyPopulation(EcdError):
    """An operation that needs individuals received an empty population."""


class EmptyColumn(EcdError):
    """A column statistic was requested on a column with no values."""

    def __init__(self, name: str):
        super().__init__(f"column {name!r} has no values")
        self.name = name


class MissingColumn(EcdError):
    """A named column is absent from the dataset or CSV header."""

    def __init__(self, name: str):
        super().__init__(f"column {name!r} not found")
        self.name = name


class ParseError(EcdError):
    """A CSV cell could not be parsed under the active missing-value policy."""

    def __init__(self, row: int, column: str, text: str):
        super().__init__(f"row {row}, column {column!r}: cannot parse {text!r} as a number")
        self.row = row
        self.column = column
        self.text = text


class EmptyAfterFiltering(EcdError):
    """Row filtering or missing-value dropping removed every row."""


class InvalidPredicate(EcdError):
    """A row-filter predicate clause is malformed."""


class NonFiniteBaseline(EcdError):
    """A perturbation baseline contains a NaN or infinite value."""

    def __init__(self, name: str, value: float):
        super().__init__(f"baseline value for {name!r} is non-finite: {value!r}")
        self.name = name
        self.value = value
