"""Canonical Parkinson's voice-feature schema and corpus access.

The canonical table has 22 continuous acoustic features, a binary ``status``
target (0 healthy, 1 patient) and a ``name`` group column holding recording
ids of the form ``<subject>_<take>`` (UCI style, e.g. ``phon_R01_S01_1``).

``UCI_ALIASES`` maps the original UCI ``parkinsons.data`` headers to the
canonical snake_case names, so the real corpus loads directly.  The package
also bundles ``data/parkinsons_replica.csv``: a fully synthetic stand-in
with the same schema, subject structure (31 subjects, 48 healthy / 147
patient rows) and realistic feature ranges, generated by
``tools/make_replica.py``.  It is NOT the UCI data; point :func:`load_corpus`
at the real file whenever you have it.
"""

from __future__ import annotations

import os
from importlib import resources

from .tabular import Column, Schema, Table, group_id, load_csv

# Feature name -> (description, unit); order matches the UCI file layout.
FEATURE_INFO = {
    "mdvp_fo_hz": ("Average vocal fundamental frequency", "Hz"),
    "mdvp_fhi_hz": ("Maximum vocal fundamental frequency", "Hz"),
    "mdvp_flo_hz": ("Minimum vocal fundamental frequency", "Hz"),
    "mdvp_jitter": ("Jitter in percentage", "%"),
    "mdvp_jitter_abs": ("Absolute jitter", "ms"),
    "mdvp_rap": ("Relative amplitude perturbation", ""),
    "mdvp_ppq": ("Five-point period perturbation quotient", ""),
    "jitter_ddp": ("Average absolute difference of differences between jitter cycles", ""),
    "mdvp_shimmer": ("Local shimmer", ""),
    "mdvp_shimmer_db": ("Local shimmer", "dB"),
    "shimmer_apq3": ("Three-point amplitude perturbation quotient", ""),
    "shimmer_apq5": ("Five-point amplitude perturbation quotient", ""),
    "mdvp_apq": ("11-point amplitude perturbation quotient", ""),
    "shimmer_dda": ("Average absolute differences between the amplitudes of consecutive periods", ""),
    "nhr": ("Noise-to-harmonics ratio", ""),
    "hnr": ("Harmonics-to-noise ratio", ""),
    "rpde": ("Recurrence period density entropy measure", ""),
    "dfa": ("Signal fractal scaling exponent of detrended fluctuation analysis", ""),
    "spread1": ("Nonlinear measure of fundamental frequency variation", ""),
    "spread2": ("Nonlinear measure of fundamental frequency variation", ""),
    "d2": ("Correlation dimension", ""),
    "ppe": ("Pitch period entropy", ""),
}

FEATURES = list(FEATURE_INFO)

# UCI header -> canonical snake_case name.
UCI_ALIASES = {
    "name": "name",
    "MDVP:Fo(Hz)": "mdvp_fo_hz",
    "MDVP:Fhi(Hz)": "mdvp_fhi_hz",
    "MDVP:Flo(Hz)": "mdvp_flo_hz",
    "MDVP:Jitter(%)": "mdvp_jitter",
    "MDVP:Jitter(Abs)": "mdvp_jitter_abs",
    "MDVP:RAP": "mdvp_rap",
    "MDVP:PPQ": "mdvp_ppq",
    "Jitter:DDP": "jitter_ddp",
    "MDVP:Shimmer": "mdvp_shimmer",
    "MDVP:Shimmer(dB)": "mdvp_shimmer_db",
    "Shimmer:APQ3": "shimmer_apq3",
    "Shimmer:APQ5": "shimmer_apq5",
    "MDVP:APQ": "mdvp_apq",
    "Shimmer:DDA": "shimmer_dda",
    "NHR": "nhr",
    "HNR": "hnr",
    "status": "status",
    "RPDE": "rpde",
    "DFA": "dfa",
    "spread1": "spread1",
    "spread2": "spread2",
    "D2": "d2",
    "PPE": "ppe",
}

# Column order of the UCI file (status sits between hnr and rpde).
_UCI_ORDER = [
    "name", "mdvp_fo_hz", "mdvp_fhi_hz", "mdvp_flo_hz", "mdvp_jitter",
    "mdvp_jitter_abs", "mdvp_rap", "mdvp_ppq", "jitter_ddp", "mdvp_shimmer",
    "mdvp_shimmer_db", "shimmer_apq3", "shimmer_apq5", "mdvp_apq",
    "shimmer_dda", "nhr", "hnr", "status", "rpde", "dfa", "spread1",
    "spread2", "d2", "ppe",
]


def canonical_schema() -> Schema:
    """The 24-column Parkinson's voice schema (22 features + status + name)."""
    columns = []
    for name in _UCI_ORDER:
        if name == "name":
            columns.append(Column("name", "discrete", unit="recording id"))
        elif name == "status":
            columns.append(Column("status", "discrete", unit="0 healthy / 1 patient",
                                  categories=(0, 1)))
        else:
            desc, unit = FEATURE_INFO[name]
            columns.append(Column(name, "continuous", unit=unit))
    return Schema(tuple(columns), target_column="status", group_column="name")


def subject_of(recording_id: str) -> str:
    """Subject id of a recording: strip the trailing take index.

    The UCI corpus never defines subject identity explicitly; each subject
    has around six recordings named ``<subject>_<take>``, so
    ``phon_R01_S01_1`` -> ``phon_R01_S01``.  Ids without a trailing integer
    are returned unchanged.
    """
    return group_id(recording_id)


def subjects(table: Table) -> list[str]:
    """Distinct subject ids in group-column order of first appearance."""
    seen: dict[str, None] = {}
    for rid in table.groups().tolist():
        seen.setdefault(subject_of(rid), None)
    return list(seen)


def load_corpus(path: str | os.PathLike) -> Table:
    """Load a corpus CSV (UCI headers or canonical snake_case) as a Table."""
    return load_csv(path, canonical_schema(), aliases=UCI_ALIASES)


def bundled_replica_path() -> str:
    """Filesystem path of the bundled synthetic stand-in corpus."""
    return str(resources.files("voxsynth").joinpath("data/parkinsons_replica.csv"))


def load_bundled_replica() -> Table:
    """Load the bundled synthetic stand-in corpus (not the real UCI data)."""
    return load_corpus(bundled_replica_path())
