"""JSON and WKT (MULTIPOLYGON/POLYGON subset) reading and writing."""
from __future__ import annotations

import json
import re

from .geometry import GeometryError, Multipolygon, normalize_polygon, validate_multipolygon


class ParseError(GeometryError):
    """Malformed serialized geometry."""


_TOKEN = re.compile(r"\s*(?:(\()|(\))|(,)|([A-Za-z]+)|([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))")


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r} at offset {pos}")
        tokens.append(m.group(m.lastindex))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tokens


class _WktReader:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def expect(self, tok):
        got = self.peek()
        if got != tok:
            raise ParseError(f"expected {tok!r} at token {self.i}, got {got!r}")
        self.i += 1

    def number(self) -> float:
        tok = self.peek()
        try:
            value = float(tok)
        except (TypeError, ValueError):
            raise ParseError(f"expected a number at token {self.i}, got {tok!r}") from None
        self.i += 1
        return value

    def ring(self):
        self.expect("(")
        pts = []
        while True:
            x = self.number()
            y = self.number()
            if self.peek() not in (",", ")"):
                raise ParseError(f"only 2D coordinates are supported (token {self.i})")
            pts.append((x, y))
            if self.peek() == ",":
                self.i += 1
                continue
            self.expect(")")
            return pts

    def polygon(self):
        self.expect("(")
        rings = [self.ring()]
        while self.peek() == ",":
            self.i += 1
            rings.append(self.ring())
        self.expect(")")
        return rings

    def read(self):
        kind = (self.peek() or "").upper()
        self.i += 1
        if kind == "POLYGON":
            polys = [self.polygon()]
        elif kind == "MULTIPOLYGON":
            self.expect("(")
            polys = [self.polygon()]
            while self.peek() == ",":
                self.i += 1
                polys.append(self.polygon())
            self.expect(")")
        else:
            raise ParseError(f"unsupported WKT geometry {kind!r}")
        if self.peek() is not None:
            raise ParseError(f"trailing tokens after geometry at token {self.i}")
        return polys


def _build(polys, validate: bool) -> Multipolygon:
    try:
        mp = Multipolygon(tuple(normalize_polygon(rings[0], rings[1:]) for rings in polys))
    except GeometryError:
        raise
    except (TypeError, ValueError) as exc:
        raise ParseError(f"bad coordinates: {exc}") from None
    if validate:
        validate_multipolygon(mp)
    return mp


def parse_wkt(text: str, validate: bool = True) -> Multipolygon:
    return _build(_WktReader(text).read(), validate)


def multipolygon_from_dict(obj: dict, validate: bool = True) -> Multipolygon:
    if not isinstance(obj, dict) or "polygons" not in obj:
        raise ParseError("expected an object with a 'polygons' array")
    polys = []
    for k, p in enumerate(obj["polygons"]):
        if not isinstance(p, dict) or "exterior" not in p:
            raise ParseError(f"polygon {k} has no 'exterior'")
        polys.append([p["exterior"], *p.get("holes", [])])
    return _build(polys, validate)


def multipolygon_to_dict(mp: Multipolygon) -> dict:
    return {
        "polygons": [
            {"exterior": [list(v) for v in p.exterior],
             "holes": [[list(v) for v in h] for h in p.holes]}
            for p in mp.polygons
        ]
    }


def parse_multipolygon(text: str, validate: bool = True) -> Multipolygon:
    """Parse JSON or WKT, normalising ring orientation and closure."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        try:
            obj = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc}") from None
        return multipolygon_from_dict(obj, validate)
    return parse_wkt(text, validate)


def _fmt(v: float) -> str:
    return repr(float(v))


def to_wkt(mp: Multipolygon) -> str:
    def ring(r):
        closed = list(r) + [r[0]]
        return "(" + ", ".join(f"{_fmt(x)} {_fmt(y)}" for x, y in closed) + ")"

    polys = ["(" + ", ".join(ring(r) for r in p.rings) + ")" for p in mp.polygons]
    return "MULTIPOLYGON (" + ", ".join(polys) + ")"


def serialize_multipolygon(mp: Multipolygon, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps(multipolygon_to_dict(mp))
    if fmt == "wkt":
        return to_wkt(mp)
    raise ValueError(f"unknown format {fmt!r}")
