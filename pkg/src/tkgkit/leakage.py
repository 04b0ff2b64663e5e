"""Duplicate auditing and leakage filtering for stripped triple splits.

Stripping temporal scope collapses facts that differed only in time into
identical (s, p, o) triples.  That creates duplicates inside a split and,
worse, test triples that literally occur in train.  The audit counts both;
the filters remove them: "intra" deduplicates within each split, "inter"
drops valid/test triples present in train, "both" does intra then inter.
"""
from __future__ import annotations

from dataclasses import dataclass

from .graph import SPLIT_NAMES, DataError, StaticTriple

FILTER_MODES = ("none", "intra", "inter", "both")

Triples = list[StaticTriple]


@dataclass
class SplitAudit:
    size: int
    distinct: int
    duplicates: int
    # surplus occurrences over the raw split size
    duplicate_fraction: float


@dataclass
class DuplicateAudit:
    train: SplitAudit
    valid: SplitAudit
    test: SplitAudit
    test_in_train: int
    # inter counts are over distinct triples, hence distinct denominators
    test_in_train_fraction: float
    valid_in_train: int
    valid_in_train_fraction: float

    def split(self, name: str) -> SplitAudit:
        return {"train": self.train, "valid": self.valid, "test": self.test}[name]

    def is_clean(self) -> bool:
        return (
            self.train.duplicates == 0
            and self.valid.duplicates == 0
            and self.test.duplicates == 0
            and self.test_in_train == 0
            and self.valid_in_train == 0
        )


def _split_audit(triples: Triples) -> SplitAudit:
    size = len(triples)
    distinct = len(set(triples))
    dups = size - distinct
    return SplitAudit(
        size=size,
        distinct=distinct,
        duplicates=dups,
        duplicate_fraction=dups / size if size else 0.0,
    )


def audit(train: Triples, valid: Triples, test: Triples) -> DuplicateAudit:
    """Count within-split duplicates and valid/test occurrences in train.

    Duplicate counts are surplus occurrences (size minus distinct) over the
    raw split; the cross-split counts compare distinct triples, so their
    fractions are over the split's distinct size.
    """
    a_train = _split_audit(train)
    a_valid = _split_audit(valid)
    a_test = _split_audit(test)
    train_set = set(train)
    tit = len(set(test) & train_set)
    vit = len(set(valid) & train_set)
    return DuplicateAudit(
        train=a_train,
        valid=a_valid,
        test=a_test,
        test_in_train=tit,
        test_in_train_fraction=tit / a_test.distinct if a_test.distinct else 0.0,
        valid_in_train=vit,
        valid_in_train_fraction=vit / a_valid.distinct if a_valid.distinct else 0.0,
    )


def _dedup(triples: Triples) -> Triples:
    return list(dict.fromkeys(triples))


def apply_filter(
    train: Triples, valid: Triples, test: Triples, mode: str
) -> tuple[Triples, Triples, Triples]:
    """Return filtered copies of the three splits.

    Raises when a nonempty test split is filtered down to nothing, since
    evaluating against it would be meaningless.
    """
    if mode not in FILTER_MODES:
        raise ValueError(f"unknown filter mode {mode!r}; expected one of {FILTER_MODES}")
    f_train, f_valid, f_test = list(train), list(valid), list(test)
    if mode in ("intra", "both"):
        f_train = _dedup(f_train)
        f_valid = _dedup(f_valid)
        f_test = _dedup(f_test)
    if mode in ("inter", "both"):
        train_set = set(f_train)
        f_valid = [t for t in f_valid if t not in train_set]
        f_test = [t for t in f_test if t not in train_set]
    if test and not f_test:
        raise DataError(f"filter mode {mode!r} removed every test triple")
    return f_train, f_valid, f_test


def format_audit(a: DuplicateAudit) -> str:
    """Human-readable audit: duplicates per split, then train leakage."""
    lines = ["intra-set duplicates"]
    for name in SPLIT_NAMES:
        s = a.split(name)
        lines.append(
            f"  {name:<5}  {s.duplicates:>8} / {s.size:<8} ({100 * s.duplicate_fraction:.2f}%)"
        )
    lines.append("inter-set occurrences in train (over distinct triples)")
    lines.append(
        f"  test   {a.test_in_train:>8} / {a.test.distinct:<8}"
        f" ({100 * a.test_in_train_fraction:.2f}%)"
    )
    lines.append(
        f"  valid  {a.valid_in_train:>8} / {a.valid.distinct:<8}"
        f" ({100 * a.valid_in_train_fraction:.2f}%)"
    )
    return "\n".join(lines) + "\n"


def audit_csv(a: DuplicateAudit) -> str:
    rows = ["metric,value"]
    for name in SPLIT_NAMES:
        s = a.split(name)
        rows.append(f"{name}_size,{s.size}")
        rows.append(f"{name}_duplicates,{s.duplicates}")
        rows.append(f"{name}_duplicate_pct,{100 * s.duplicate_fraction:.2f}")
    rows.append(f"test_in_train,{a.test_in_train}")
    rows.append(f"test_in_train_pct,{100 * a.test_in_train_fraction:.2f}")
    rows.append(f"valid_in_train,{a.valid_in_train}")
    rows.append(f"valid_in_train_pct,{100 * a.valid_in_train_fraction:.2f}")
    return "\n".join(rows) + "\n"
