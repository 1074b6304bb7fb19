"""Reader and writer for the UEA archive's `.ts` text format.

Header: '@' directives ending with '@data'; body: one sample per line, the
channels as colon-separated blocks of comma-separated decimals and the class
label as the final block.  '#' lines are comments.  Only equal-length,
fully-observed, labelled datasets are accepted; anything else is a
ParseError carrying the offending line number.
"""

import numpy as np

from .data import TimeSeriesDataset
from .errors import ParseError

_IGNORED_DIRECTIVES = {"timestamps", "missing", "univariate", "targetlabel", "dimension"}


def parse_ts(text, name=None):
    lines = text.splitlines()
    dims = None
    series_length = None
    class_names = None
    problem_name = name
    data_start = None

    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not line.startswith("@"):
            raise ParseError(f"expected '@' directive before @data, got {line[:40]!r}", lineno)
        key, _, rest = line[1:].partition(" ")
        key = key.lower()
        rest = rest.strip()
        if key == "data":
            data_start = lineno
            break
        elif key == "problemname":
            problem_name = rest or problem_name
        elif key == "dimensions":
            dims = _int_directive(rest, "dimensions", lineno)
        elif key == "serieslength":
            series_length = _int_directive(rest, "seriesLength", lineno)
        elif key == "equallength":
            if rest.lower() != "true":
                raise ParseError("only equal-length datasets are supported", lineno)
        elif key == "classlabel":
            parts = rest.split()
            if not parts or parts[0].lower() != "true" or len(parts) < 2:
                raise ParseError("@classLabel must be 'true' followed by the labels", lineno)
            class_names = parts[1:]
        elif key in _IGNORED_DIRECTIVES:
            continue
        # unknown directives are ignored for compatibility with archive files

    if data_start is None:
        raise ParseError("missing @data section", len(lines) or 1)
    if dims is None:
        raise ParseError("missing @dimensions directive", data_start)
    if class_names is None:
        raise ParseError("missing @classLabel directive", data_start)
    label_index = {c: i for i, c in enumerate(class_names)}

    samples = []
    labels = []
    for lineno in range(data_start + 1, len(lines) + 1):
        line = lines[lineno - 1].strip()
        if not line or line.startswith("#"):
            continue
        blocks = line.split(":")
        if len(blocks) != dims + 1:
            raise ParseError(f"expected {dims} channels + label, found {len(blocks) - 1} channels", lineno)
        channels = []
        for block in blocks[:-1]:
            values = block.split(",")
            if "?" in (v.strip() for v in values):
                raise ParseError("missing values ('?') are not supported", lineno)
            try:
                channel = [float(v) for v in values]
            except ValueError:
                raise ParseError(f"non-numeric value in channel data: {block[:40]!r}", lineno) from None
            if series_length is None:
                series_length = len(channel)
            if len(channel) != series_length:
                raise ParseError(
                    f"channel has {len(channel)} values, expected {series_length}", lineno
                )
            channels.append(channel)
        label = blocks[-1].strip()
        if label not in label_index:
            raise ParseError(f"unknown class label {label!r}", lineno)
        samples.append(channels)
        labels.append(label_index[label])

    if not samples:
        raise ParseError("no data rows after @data", data_start)
    return TimeSeriesDataset(
        name=problem_name or "unnamed",
        samples=np.asarray(samples, dtype=np.float32),
        labels=np.asarray(labels, dtype=np.int64),
        class_names=tuple(class_names),
    )


def _int_directive(text, key, lineno):
    try:
        value = int(text)
    except ValueError:
        raise ParseError(f"@{key} must be an integer, got {text!r}", lineno) from None
    if value < 1:
        raise ParseError(f"@{key} must be >= 1, got {value}", lineno)
    return value


def parse_ts_file(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_ts(f.read())


def format_ts(ds):
    """Render a dataset back to `.ts` text; values survive a parse round-trip."""
    out = [
        f"@problemName {ds.name}",
        f"@dimensions {ds.channels}",
        f"@seriesLength {ds.length}",
        "@equalLength true",
        "@classLabel true " + " ".join(ds.class_names),
        "@data",
    ]
    for i in range(ds.n):
        blocks = [",".join(repr(float(v)) for v in ch) for ch in ds.samples[i]]
        blocks.append(ds.class_names[ds.labels[i]])
        out.append(":".join(blocks))
    return "\n".join(out) + "\n"


def write_ts_file(ds, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(format_ts(ds))
