"""Binary trie over IPv4 address bits for longest-prefix matching."""

from __future__ import annotations

import ipaddress
from typing import Iterable, Iterator

from .routing import Prefix

__all__ = ["PrefixTable", "longest_match"]

# node layout: [child0, child1, prefix-or-None]
_ZERO, _ONE, _VALUE = 0, 1, 2


class PrefixTable:
    """Immutable-after-build table answering longest-match queries."""

    def __init__(self, prefixes: Iterable[Prefix] = ()):
        self._root: list = [None, None, None]
        self._size = 0
        for prefix in prefixes:
            self._insert(prefix)

    def _insert(self, prefix: Prefix) -> None:
        net = prefix.network
        bits = int(net.network_address)
        node = self._root
        for depth in range(net.prefixlen):
            bit = (bits >> (31 - depth)) & 1
            child = node[bit]
            if child is None:
                child = node[bit] = [None, None, None]
            node = child
        if node[_VALUE] is None:
            self._size += 1
        node[_VALUE] = prefix

    def lookup(self, ip: str | int | ipaddress.IPv4Address) -> Prefix | None:
        bits = int(ipaddress.IPv4Address(ip))
        node = self._root
        best = node[_VALUE]
        for depth in range(32):
            node = node[(bits >> (31 - depth)) & 1]
            if node is None:
                break
            if node[_VALUE] is not None:
                best = node[_VALUE]
        return best

    def __len__(self) -> int:
        return self._size

    def __iter__(self) -> Iterator[Prefix]:
        stack = [self._root]
        while stack:
            node = stack.pop()
            if node[_VALUE] is not None:
                yield node[_VALUE]
            stack.extend(c for c in (node[_ONE], node[_ZERO]) if c is not None)


def longest_match(table: PrefixTable, ip) -> Prefix | None:
    return table.lookup(ip)
