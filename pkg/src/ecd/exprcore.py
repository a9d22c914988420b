"""Expression trees over dataset variables, constants, and arithmetic operators.

Trees are immutable after construction and all operations here are pure
functions, so a tree can be shared and evaluated concurrently. Node ids are
assigned by preorder traversal at construction time; any structural edit
produces a new tree with fresh ids.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Union

import numpy as np

from .errors import MalformedTree, MissingVariable, UnknownNodeId

# Denominators smaller than this in magnitude make protected division return 1.0.
DIV_EPSILON = 1e-6


def pdiv(x: float, y: float) -> float:
    """Protected division: total over the reals, 1.0 when the denominator is near zero."""
    if abs(y) >= DIV_EPSILON:
        return x / y
    return 1.0


def _pdiv_vec(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    out = np.ones_like(y)
    np.divide(x, y, out=out, where=np.abs(y) >= DIV_EPSILON)
    return out


class Operator(enum.Enum):
    """Binary arithmetic operators available to expressions."""

    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    PDIV = "pdiv"

    @property
    def arity(self) -> int:
        return 2

    @property
    def symbol(self) -> str:
        return _SYMBOLS[self]

    def apply(self, a: float, b: float) -> float:
        return _SCALAR_FUNCS[self](a, b)

    def apply_vec(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return _VECTOR_FUNCS[self](a, b)


_SYMBOLS = {
    Operator.ADD: "+",
    Operator.SUB: "-",
    Operator.MUL: "*",
    Operator.PDIV: "/",
}

_SCALAR_FUNCS = {
    Operator.ADD: lambda a, b: a + b,
    Operator.SUB: lambda a, b: a - b,
    Operator.MUL: lambda a, b: a * b,
    Operator.PDIV: pdiv,
}

_VECTOR_FUNCS = {
    Operator.ADD: np.add,
    Operator.SUB: np.subtract,
    Operator.MUL: np.multiply,
    Operator.PDIV: _pdiv_vec,
}

OPERATORS: tuple[Operator, ...] = tuple(Operator)


@dataclass(frozen=True)
class VariableRef:
    """Leaf payload naming a dataset variable."""

    name: str


@dataclass(frozen=True)
class Constant:
    """Leaf payload holding a numeric constant."""

    value: float


Payload = Union[Operator, VariableRef, Constant]

Bindings = Mapping[str, float]


@dataclass(frozen=True)
class Node:
    """One expression-tree node: a payload plus ordered children.

    Node is a plain container; structural invariants (leaves childless,
    operator arity respected) are enforced when an ExpressionTree is built.
    """

    payload: Payload
    children: tuple["Node", ...] = ()


def var_node(name: str) -> Node:
    return Node(VariableRef(name))


def const_node(value: float) -> Node:
    return Node(Constant(float(value)))


def op_node(operator: Operator, *children: Node) -> Node:
    return Node(operator, tuple(children))


def format_constant(value: float) -> str:
    """Shortest decimal form that round-trips; integral values drop the mantissa."""
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def _validate(node: Node) -> None:
    payload = node.payload
    if isinstance(payload, Operator):
        if len(node.children) != payload.arity:
            raise MalformedTree(
                f"operator {payload.value} expects {payload.arity} children, "
                f"got {len(node.children)}"
            )
    elif isinstance(payload, VariableRef):
        if node.children:
            raise MalformedTree("variable leaves must have no children")
        if not payload.name:
            raise MalformedTree("variable names must be nonempty")
    elif isinstance(payload, Constant):
        if node.children:
            raise MalformedTree("constant leaves must have no children")
    else:
        raise MalformedTree(f"unknown payload type: {type(payload).__name__}")
    for child in node.children:
        _validate(child)


def preorder_nodes(root: Node) -> list[Node]:
    """All nodes in preorder; list index equals the node id in a tree built on root."""
    out: list[Node] = []
    stack = [root]
    while stack:
        node = stack.pop()
        out.append(node)
        stack.extend(reversed(node.children))
    return out


def node_size(root: Node) -> int:
    return len(preorder_nodes(root))


def node_depth(root: Node) -> int:
    """Longest root-to-leaf path, counted in edges."""
    if not root.children:
        return 0
    return 1 + max(node_depth(c) for c in root.children)


def subtree_at(root: Node, index: int) -> Node:
    nodes = preorder_nodes(root)
    if index < 0 or index >= len(nodes):
        raise UnknownNodeId(index)
    return nodes[index]


def replace_at(root: Node, index: int, replacement: Node) -> Node:
    """New root with the subtree at preorder position `index` swapped out."""

    def rec(node: Node, pos: int) -> tuple[Node, int]:
        if pos == index:
            return replacement, pos + node_size(node)
        if not node.children:
            return node, pos + 1
        consumed = pos + 1
        new_children = []
        changed = False
        for child in node.children:
            new_child, consumed = rec(child, consumed)
            changed = changed or new_child is not child
            new_children.append(new_child)
        if not changed:
            return node, consumed
        return Node(node.payload, tuple(new_children)), consumed

    new_root, total = rec(root, 0)
    if index < 0 or index >= total:
        raise UnknownNodeId(index)
    return new_root


@dataclass(frozen=True)
class ExpressionTree:
    """A validated expression tree with stable preorder node ids."""

    root: Node

    def __post_init__(self):
        _validate(self.root)

    @cached_property
    def nodes(self) -> tuple[Node, ...]:
        """Nodes in preorder; the id of a node is its index here."""
        return tuple(preorder_nodes(self.root))

    @cached_property
    def size(self) -> int:
        return len(self.nodes)

    @cached_property
    def depth(self) -> int:
        return node_depth(self.root)

    @cached_property
    def infix(self) -> str:
        return _infix(self.root)

    def node(self, node_id: int) -> Node:
        if node_id < 0 or node_id >= len(self.nodes):
            raise UnknownNodeId(node_id)
        return self.nodes[node_id]

    def __str__(self) -> str:
        return self.infix


def _infix(node: Node) -> str:
    payload = node.payload
    if isinstance(payload, VariableRef):
        return payload.name
    if isinstance(payload, Constant):
        return format_constant(payload.value)
    left, right = node.children
    return f"({_infix(left)} {payload.symbol} {_infix(right)})"


def to_infix(tree: ExpressionTree) -> str:
    """Fully parenthesized, deterministic infix rendering."""
    return tree.infix


def size(tree: ExpressionTree) -> int:
    return tree.size


def depth(tree: ExpressionTree) -> int:
    return tree.depth


def dependency_set(tree: ExpressionTree) -> set[str]:
    """Names of all variables referenced anywhere in the tree."""
    return {
        node.payload.name for node in tree.nodes if isinstance(node.payload, VariableRef)
    }


def evaluate(tree: ExpressionTree, bindings: Bindings) -> float:
    """Value at the root under the given variable bindings."""
    return _eval_scalar(tree.root, bindings)


def _eval_scalar(node: Node, bindings: Bindings) -> float:
    payload = node.payload
    if isinstance(payload, VariableRef):
        try:
            return float(bindings[payload.name])
        except KeyError:
            raise MissingVariable(payload.name) from None
    if isinstance(payload, Constant):
        return payload.value
    a = _eval_scalar(node.children[0], bindings)
    b = _eval_scalar(node.children[1], bindings)
    return payload.apply(a, b)


def evaluate_nodes(tree: ExpressionTree, bindings: Bindings) -> dict[int, float]:
    """Stabilized value of every node, keyed by node id.

    One bottom-up pass; on an acyclic structure this is already the fixpoint,
    and the root entry equals evaluate(tree, bindings) exactly.
    """
    values: dict[int, float] = {}

    def rec(node: Node, pos: int) -> tuple[float, int]:
        payload = node.payload
        my_id = pos
        if isinstance(payload, VariableRef):
            try:
                value = float(bindings[payload.name])
            except KeyError:
                raise MissingVariable(payload.name) from None
            values[my_id] = value
            return value, pos + 1
        if isinstance(payload, Constant):
            values[my_id] = payload.value
            return payload.value, pos + 1
        consumed = pos + 1
        args = []
        for child in node.children:
            value, consumed = rec(child, consumed)
            args.append(value)
        value = payload.apply(*args)
        values[my_id] = value
        return value, consumed

    rec(tree.root, 0)
    return values


def evaluate_batch(tree: ExpressionTree, data) -> np.ndarray:
    """Row-wise evaluation over a dataset; element i equals evaluate on row i.

    Vectorized over columns; float64 arithmetic makes the result bit-identical
    to the scalar path.
    """
    columns = data.columns
    n = data.n_rows
    with np.errstate(all="ignore"):
        return _eval_vec(tree.root, columns, n)


def _eval_vec(node: Node, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
    payload = node.payload
    if isinstance(payload, VariableRef):
        try:
            return columns[payload.name]
        except KeyError:
            raise MissingVariable(payload.name) from None
    if isinstance(payload, Constant):
        return np.full(n, payload.value)
    a = _eval_vec(node.children[0], columns, n)
    b = _eval_vec(node.children[1], columns, n)
    return payload.apply_vec(a, b)


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(tree: ExpressionTree, annotations: Mapping[int, str] | None = None) -> str:
    """DOT digraph of the tree: variables boxed, operators as ellipses.

    Edges run child to parent, following the direction values flow.
    Annotation strings, keyed by node id, are appended to node labels.
    """
    annotations = dict(annotations or {})
    for key in annotations:
        if key < 0 or key >= tree.size:
            raise UnknownNodeId(key)

    lines = ["digraph expression_tree {"]
    nodes = tree.nodes
    for node_id, node in enumerate(nodes):
        payload = node.payload
        if isinstance(payload, Operator):
            label, shape = payload.symbol, "ellipse"
        elif isinstance(payload, VariableRef):
            label, shape = payload.name, "box"
        else:
            label, shape = format_constant(payload.value), "box"
        if node_id in annotations:
            label = f"{label}\\n{_dot_escape(annotations[node_id])}"
        else:
            label = _dot_escape(label)
        lines.append(f'  n{node_id} [label="{label}" shape={shape}];')

    def edges(node: Node, pos: int) -> int:
        my_id = pos
        consumed = pos + 1
        for child in node.children:
            lines.append(f"  n{consumed} -> n{my_id};")
            consumed = edges(child, consumed)
        return consumed

    edges(tree.root, 0)
    lines.append("}")
    return "\n".join(lines) + "\n"


def tree_to_json(tree: ExpressionTree) -> dict:
    """Nested-node document for the tree, suitable for JSON serialization."""

    def rec(node: Node) -> dict:
        payload = node.payload
        if isinstance(payload, VariableRef):
            return {"var": payload.name}
        if isinstance(payload, Constant):
            return {"const": payload.value}
        return {"op": payload.value, "children": [rec(c) for c in node.children]}

    return rec(tree.root)


def tree_from_json(doc: dict) -> ExpressionTree:
    """Inverse of tree_to_json; raises MalformedTree on unrecognized documents."""

    def rec(item) -> Node:
        if not isinstance(item, dict):
            raise MalformedTree(f"expected an object, got {type(item).__name__}")
        if "var" in item:
            return var_node(str(item["var"]))
        if "const" in item:
            return const_node(float(item["const"]))
        if "op" in item:
            try:
                operator = Operator(item["op"])
            except ValueError:
                raise MalformedTree(f"unknown operator {item['op']!r}") from None
            return Node(operator, tuple(rec(c) for c in item.get("children", [])))
        raise MalformedTree(f"node object needs var, const, or op: {sorted(item)}")

    return ExpressionTree(rec(doc))
