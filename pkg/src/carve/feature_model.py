"""Feature hierarchy and the firing rule for mappings."""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field

from carve.diagnostics import CarveError


class UnknownFeature(CarveError):
    code = "UnknownFeature"

    def __init__(self, name: str):
        super().__init__(f"feature {name!r} is not in the hierarchy")
        self.name = name


class DuplicateFeature(CarveError):
    code = "DuplicateFeature"

    def __init__(self, name: str, line: int | None = None):
        super().__init__(f"feature {name!r} appears more than once", line)
        self.name = name


@dataclass(frozen=True)
class FeatureNode:
    name: str
    children: tuple[FeatureNode, ...] = ()


@dataclass(frozen=True)
class FeatureHierarchy:
    """An ordered forest of uniquely named features."""

    roots: tuple[FeatureNode, ...] = ()
    _index: dict[str, FeatureNode] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        index: dict[str, FeatureNode] = {}
        stack = list(self.roots)
        while stack:
            node = stack.pop()
            if node.name in index:
                raise DuplicateFeature(node.name)
            index[node.name] = node
            stack.extend(node.children)
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_dict(cls, tree: dict) -> FeatureHierarchy:
        """Build from nested dicts, e.g. ``{"A": {"B": {}}, "C": {}}``."""

        def build(name, sub):
            return FeatureNode(name, tuple(build(k, v) for k, v in (sub or {}).items()))

        return cls(tuple(build(k, v) for k, v in tree.items()))

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._index)

    def names(self) -> frozenset[str]:
        return frozenset(self._index)

    def walk(self) -> Iterator[tuple[int, FeatureNode]]:
        """Pre-order traversal yielding (depth, node)."""
        stack = [(0, n) for n in reversed(self.roots)]
        while stack:
            depth, node = stack.pop()
            yield depth, node
            stack.extend((depth + 1, c) for c in reversed(node.children))

    def descendants(self, name: str) -> set[str]:
        if name not in self._index:
            raise UnknownFeature(name)
        out: set[str] = set()
        stack = list(self._index[name].children)
        while stack:
            node = stack.pop()
            out.add(node.name)
            stack.extend(node.children)
        return out


def close_removal_set(hierarchy: FeatureHierarchy, requested: Iterable[str]) -> frozenset[str]:
    """Return the requested features plus all their descendants (never ancestors)."""
    closed: set[str] = set()
    for name in requested:
        if name not in hierarchy:
            raise UnknownFeature(name)
        if name in closed:
            continue
        closed.add(name)
        closed |= hierarchy.descendants(name)
    return frozenset(closed)


def mapping_fires(mapping_features: Iterable[str], removal: frozenset[str] | set[str]) -> bool:
    """A mapping fires when every feature it names is selected for removal."""
    return all(f in removal for f in mapping_features)
