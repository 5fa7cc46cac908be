"""Named workload catalog.

Fifteen classic CNN layers (AlexNet, TinyYOLO, Inception, SRCNN) cover the
benchmarking suite; a second group adds dilated, pixel-shuffle-feeding,
depthwise, and spatial-correlation layers.  The classic sources do not fix
evaluation feature-map sizes, so every entry carries a desk-scale default
of 56x56 that callers may override per run; the chosen size is recorded in
run metadata.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, replace

from .workloads import (
    GeometryError,
    Workload,
    make_conv,
    make_correlation,
    make_depthwise,
)

DEFAULT_SPATIAL = 56


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str  # conv | depthwise | correlation
    c_i: int
    c_o: int
    k_w: int = 1
    k_h: int = 1
    stride: int = 1
    dilation: int = 1
    spatial: int = DEFAULT_SPATIAL
    search: int = 1  # displacement window side, correlation only
    padding: str = "none"
    tag: str = "classic"

    def build(self, spatial: int | None = None) -> Workload:
        size = spatial if spatial is not None else self.spatial
        if self.kind == "conv":
            w = make_conv(
                self.c_i, self.c_o, size, size, self.k_w, self.k_h,
                self.stride, self.dilation, name=self.name,
            )
        elif self.kind == "depthwise":
            w = make_depthwise(
                self.c_i, size, size, self.k_w, self.k_h,
                self.stride, self.dilation, name=self.name,
            )
        elif self.kind == "correlation":
            w = make_correlation(self.c_i, size, size, self.search, self.search, name=self.name)
        else:
            raise GeometryError(f"unknown catalog kind {self.kind!r}")
        w.meta["catalog_tag"] = self.tag
        w.meta["spatial"] = size
        w.meta["padding"] = self.padding if self.kind != "correlation" else "zero"
        return w


# Classic suite: stride, kernel, channels as published per layer.
CLASSIC = (
    CatalogEntry("AL CONV1", "conv", 3, 48, 11, 11, stride=4),
    CatalogEntry("AL CONV2", "conv", 48, 128, 5, 5),
    CatalogEntry("AL CONV3", "conv", 128, 192, 3, 3),
    CatalogEntry("AL CONV4", "conv", 192, 192, 3, 3),
    CatalogEntry("AL CONV5", "conv", 192, 128, 3, 3),
    CatalogEntry("TY CONV1", "conv", 3, 16, 3, 3),
    CatalogEntry("TY CONV2", "conv", 16, 32, 3, 3),
    CatalogEntry("TY CONV3", "conv", 32, 64, 3, 3),
    CatalogEntry("TY CONV4", "conv", 64, 128, 3, 3),
    CatalogEntry("TY CONV5", "conv", 128, 256, 3, 3),
    CatalogEntry("TY CONV6", "conv", 256, 512, 3, 3),
    CatalogEntry("TY CONV8", "conv", 1024, 125, 1, 1),
    CatalogEntry("IN 1x7", "conv", 64, 64, 1, 7),
    CatalogEntry("IN 7x1", "conv", 64, 64, 7, 1),
    CatalogEntry("SR CONV1", "conv", 3, 64, 9, 9),
)

# Newer layer shapes plus spatial matching.  Channel/window constants are
# fixed here (documented catalog choices, not taken from any one net dump):
# dilated 3x3 stands in for atrous context layers, the 32->36 conv feeds a
# 3x pixel shuffle, depthwise entries use common mobile widths, and the
# correlation windows cover a cheap and an expensive displacement search.
MODERN = (
    CatalogEntry("DL DCONV3 d2", "conv", 64, 64, 3, 3, dilation=2, tag="modern"),
    CatalogEntry("DL DCONV3 d4", "conv", 128, 128, 3, 3, dilation=4, tag="modern"),
    CatalogEntry("DL DDW3 d2", "depthwise", 128, 128, 3, 3, dilation=2, tag="modern"),
    CatalogEntry("ES CONV3 PS", "conv", 32, 36, 3, 3, tag="modern"),
    CatalogEntry("MN DW3", "depthwise", 128, 128, 3, 3, tag="modern"),
    CatalogEntry("MN DW3 s2", "depthwise", 256, 256, 3, 3, stride=2, tag="modern"),
    CatalogEntry("MN PW1", "conv", 128, 128, 1, 1, tag="modern"),
    CatalogEntry("CORR S3", "correlation", 32, 32, search=3, tag="modern"),
    CatalogEntry("CORR S9", "correlation", 64, 64, search=9, tag="modern"),
)

ALL = CLASSIC + MODERN


def catalog(tag: str | None = None) -> tuple[CatalogEntry, ...]:
    if tag is None:
        return ALL
    return tuple(e for e in ALL if e.tag == tag)


def lookup(name: str) -> CatalogEntry:
    for e in ALL:
        if e.name == name:
            return e
    raise KeyError(f"no catalog entry named {name!r}")


def build(name: str, spatial: int | None = None) -> Workload:
    return lookup(name).build(spatial)


_FIELDS = (
    "name", "kind", "c_i", "c_o", "k_w", "k_h",
    "stride", "dilation", "spatial", "search", "padding", "tag",
)
_INT_FIELDS = {"c_i", "c_o", "k_w", "k_h", "stride", "dilation", "spatial", "search"}


def to_text(entries=ALL) -> str:
    """Serialize entries to tab-separated text with a header row."""
    buf = io.StringIO()
    buf.write("\t".join(_FIELDS) + "\n")
    for e in entries:
        buf.write("\t".join(str(getattr(e, f)) for f in _FIELDS) + "\n")
    return buf.getvalue()


def from_text(text: str) -> tuple[CatalogEntry, ...]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    header = tuple(lines[0].split("\t"))
    if header != _FIELDS:
        raise ValueError(f"unexpected catalog header {header}")
    out = []
    for ln in lines[1:]:
        vals = ln.split("\t")
        kwargs = {
            f: (int(v) if f in _INT_FIELDS else v)
            for f, v in zip(_FIELDS, vals)
        }
        out.append(CatalogEntry(**kwargs))
    return tuple(out)


def with_spatial(entry: CatalogEntry, spatial: int) -> CatalogEntry:
    return replace(entry, spatial=spatial)
