"""Seeded procurement ledgers with planted fraud archetypes and label noise.

Every record is generated from a *feature class*: 0 (clean) or one of the
fraud archetypes below. Each archetype plants exactly one signal and leaves
every other signal in its clean state, so the rules are mutually exclusive
and :func:`replay_rules` recovers the feature class from the eight feature
columns alone.

=====  ==================  ===============================================
type   name                planted signal
=====  ==================  ===============================================
1      blacklisted         SSN drawn from the blacklisted supplier block
2      inflated_price      NP at least 2x the material group's median price
3      bulk_thin_margin    PA >= 1000 units at or below the median price
4      total_mismatch      PTP differs from NP * PA by more than 10%
5      repeat_offender     PGN drawn from the repeat-offender group block
=====  ==================  ===============================================

Clean distributions (all draws from one ``numpy`` PCG64 stream):

* NP: group median ``80 + 4 * mgn_index`` times a log-uniform factor in
  [1/1.25, 1.25], so the median of a group's clean prices is exactly its
  median price.
* PA: integer, uniform in [1, 400].
* PTP: ``NP * PA`` times a uniform factor in [0.995, 1.005], cents rounded.
* Identifiers: uniform over their pools (see :class:`Pools` for the
  numbering); PSN is an increasing serial.
* Type 4 adds an off-ledger surcharge of 1.5x to 3x the largest possible
  clean order total to PTP.

Label noise
-----------
Labels are assigned first, with exact class counts. A record is then *noisy*
with probability ``label_noise``: a noisy fraud-labelled record gets clean
features, and a noisy clean-labelled record gets the features of a uniformly
drawn archetype. The label therefore disagrees with the planted rule on the
binary question exactly for the noisy records, which gives the ceilings
computed by :func:`bayes_accuracy`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .data import Dataset

ARCHETYPES = {
    1: "blacklisted",
    2: "inflated_price",
    3: "bulk_thin_margin",
    4: "total_mismatch",
    5: "repeat_offender",
}

PSN_BASE = 4_500_000_000
PGN_BASE = 100
PON_BASE = 1000
MGN_BASE = 2000
SSN_BASE = 700_000

PRICE_BASE = 80.0
PRICE_STEP = 4.0
CLEAN_PRICE_SPREAD = 1.25
INFLATION_RANGE = (2.5, 4.0)
BULK_PRICE_RANGE = (0.8, 1.0)
CLEAN_PA_RANGE = (1, 400)
BULK_PA_RANGE = (1500, 4000)
BULK_PA_THRESHOLD = 1000.0
INFLATION_THRESHOLD = 2.0
CLEAN_TOTAL_JITTER = 0.005
MISMATCH_THRESHOLD = 0.10
SURCHARGE_RANGE = (1.5, 3.0)


class GeneratorError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n: int = 50000
    fraud_ratio: float = 0.5
    k_fraud: int = 5
    label_noise: float = 0.0
    seed: int = 0
    pgn_pool: int = 40
    pon_pool: int = 12
    mgn_pool: int = 60
    ssn_pool: int = 400
    blacklist_fraction: float = 0.1
    offender_fraction: float = 0.1

    def validate(self) -> None:
        if self.n < 1:
            raise GeneratorError("n must be at least 1")
        if not 0.0 < self.fraud_ratio < 1.0:
            raise GeneratorError(f"fraud_ratio must be in (0, 1), got {self.fraud_ratio}")
        if not 1 <= self.k_fraud <= len(ARCHETYPES):
            raise GeneratorError(f"k_fraud must be in 1..{len(ARCHETYPES)}, got {self.k_fraud}")
        if not 0.0 <= self.label_noise < 0.5:
            raise GeneratorError(f"label_noise must be in [0, 0.5), got {self.label_noise}")
        for name in ("pgn_pool", "pon_pool", "mgn_pool", "ssn_pool"):
            if getattr(self, name) < 2:
                raise GeneratorError(f"{name} must be at least 2")
        for name in ("blacklist_fraction", "offender_fraction"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise GeneratorError(f"{name} must be in (0, 1), got {v}")
        _split_pool(self.ssn_pool, self.blacklist_fraction, "ssn_pool")
        _split_pool(self.pgn_pool, self.offender_fraction, "pgn_pool")

    @property
    def fraud_count(self) -> int:
        return int(math.floor(self.n * self.fraud_ratio + 0.5))

    @classmethod
    def from_mapping(cls, mapping: dict) -> "GeneratorConfig":
        """Build from string or typed values, e.g. a parsed ``key = value`` file."""
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in mapping.items():
            key = key.strip().replace("-", "_")
            if key not in known:
                raise GeneratorError(f"unknown generator option {key!r}")
            kind = int if key in ("n", "k_fraud", "seed", "pgn_pool", "pon_pool",
                                  "mgn_pool", "ssn_pool") else float
            try:
                kwargs[key] = kind(value)
            except (TypeError, ValueError):
                raise GeneratorError(f"bad value for {key}: {value!r}") from None
        return cls(**kwargs)


def read_config_file(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise GeneratorError(f"{path}:{line_no}: expected key = value")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _split_pool(pool: int, fraction: float, name: str) -> int:
    """Number of ids reserved for the flagged block at the top of a pool."""
    flagged = int(math.floor(pool * fraction + 0.5))
    if flagged < 1 or flagged >= pool:
        raise GeneratorError(f"{name} too small for the requested flagged fraction")
    return flagged


@dataclass(frozen=True)
class Pools:
    """Identifier layout derived from a config.

    Flagged suppliers (blacklist) and flagged procurement groups (repeat
    offenders) are numbered in their own block, which starts after a gap as
    wide as the unflagged block: unflagged SSNs are ``SSN_BASE + i`` for
    ``i < ssn_normal``, blacklisted ones ``SSN_BASE + 2 * ssn_normal + j``.
    """

    ssn_pool: int
    ssn_blacklisted: int
    pgn_pool: int
    pgn_offenders: int
    pon_pool: int
    mgn_pool: int

    @classmethod
    def from_config(cls, cfg: GeneratorConfig) -> "Pools":
        return cls(
            ssn_pool=cfg.ssn_pool,
            ssn_blacklisted=_split_pool(cfg.ssn_pool, cfg.blacklist_fraction, "ssn_pool"),
            pgn_pool=cfg.pgn_pool,
            pgn_offenders=_split_pool(cfg.pgn_pool, cfg.offender_fraction, "pgn_pool"),
            pon_pool=cfg.pon_pool,
            mgn_pool=cfg.mgn_pool,
        )

    @property
    def ssn_normal(self) -> int:
        return self.ssn_pool - self.ssn_blacklisted

    @property
    def pgn_normal(self) -> int:
        return self.pgn_pool - self.pgn_offenders

    def ssn_codes(self, flagged: np.ndarray, index: np.ndarray) -> np.ndarray:
        return SSN_BASE + np.where(flagged, 2 * self.ssn_normal, 0) + index

    def pgn_codes(self, flagged: np.ndarray, index: np.ndarray) -> np.ndarray:
        return PGN_BASE + np.where(flagged, 2 * self.pgn_normal, 0) + index

    def blacklisted(self, ssn) -> np.ndarray:
        return np.asarray(ssn) - SSN_BASE >= 2 * self.ssn_normal

    def offender(self, pgn) -> np.ndarray:
        return np.asarray(pgn) - PGN_BASE >= 2 * self.pgn_normal


def group_median_price(mgn) -> np.ndarray:
    """Median clean unit price of a material group (identified by its MGN code)."""
    return PRICE_BASE + PRICE_STEP * (np.asarray(mgn, dtype=np.float64) - MGN_BASE)


def largest_clean_total(config: GeneratorConfig) -> float:
    """Upper bound on NP * PA for a clean record under ``config``."""
    top = group_median_price(MGN_BASE + config.mgn_pool - 1)
    return float(top * CLEAN_PRICE_SPREAD * CLEAN_PA_RANGE[1])


def _uniform_int(rng, lo: int, hi_inclusive: int, size: int) -> np.ndarray:
    return rng.integers(lo, hi_inclusive + 1, size=size)


def generate(config: GeneratorConfig) -> Dataset:
    """Draw a ledger of ``config.n`` records; deterministic in ``config``."""
    config.validate()
    pools = Pools.from_config(config)
    rng = np.random.default_rng(config.seed)
    n, k = config.n, config.k_fraud

    # labels with exact class counts
    n_fraud = config.fraud_count
    ft = np.zeros(n, dtype=np.int64)
    ft[:n_fraud] = rng.integers(1, k + 1, size=n_fraud)
    ft = ft[rng.permutation(n)]

    # feature class: label unless the record is noisy
    noisy = rng.random(n) < config.label_noise
    decoy = rng.integers(1, k + 1, size=n)
    kind = np.where(noisy, np.where(ft == 0, decoy, 0), ft)

    psn = PSN_BASE + np.cumsum(_uniform_int(rng, 1, 20, n))
    pon = PON_BASE + rng.integers(0, pools.pon_pool, size=n)
    mgn = MGN_BASE + rng.integers(0, pools.mgn_pool, size=n)

    is5, is1 = kind == 5, kind == 1
    pgn = pools.pgn_codes(is5, np.where(
        is5,
        rng.integers(0, pools.pgn_offenders, size=n),
        rng.integers(0, pools.pgn_normal, size=n),
    ))
    ssn = pools.ssn_codes(is1, np.where(
        is1,
        rng.integers(0, pools.ssn_blacklisted, size=n),
        rng.integers(0, pools.ssn_normal, size=n),
    ))

    median = group_median_price(mgn)
    spread = math.log(CLEAN_PRICE_SPREAD)
    clean_np = median * np.exp(rng.uniform(-spread, spread, size=n))
    inflated_np = median * rng.uniform(*INFLATION_RANGE, size=n)
    bulk_np = median * rng.uniform(*BULK_PRICE_RANGE, size=n)
    unit = np.select([kind == 2, kind == 3], [inflated_np, bulk_np], clean_np)
    unit = np.round(unit, 2)

    clean_pa = _uniform_int(rng, *CLEAN_PA_RANGE, n)
    bulk_pa = _uniform_int(rng, *BULK_PA_RANGE, n)
    pa = np.where(kind == 3, bulk_pa, clean_pa).astype(np.float64)

    jitter = rng.uniform(1 - CLEAN_TOTAL_JITTER, 1 + CLEAN_TOTAL_JITTER, size=n)
    surcharge = rng.uniform(*SURCHARGE_RANGE, size=n) * largest_clean_total(config)
    ptp = np.round(np.where(kind == 4, unit * pa + surcharge, unit * pa * jitter), 2)

    return Dataset({
        "psn": psn, "pgn": pgn, "pon": pon, "mgn": mgn,
        "np": unit, "pa": pa, "ptp": ptp, "ft": ft, "ssn": ssn,
    })


def replay_rules(ds: Dataset, config: GeneratorConfig) -> np.ndarray:
    """Recover each record's feature class by re-applying the archetype rules.

    Uses only the eight feature columns; FT is never read.
    """
    pools = Pools.from_config(config)
    k = config.k_fraud
    unit, pa, ptp = ds.column("np"), ds.column("pa"), ds.column("ptp")
    product = unit * pa
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(product > 0, ptp / product, np.inf)
    rules = [
        (1, pools.blacklisted(ds.column("ssn"))),
        (2, unit >= INFLATION_THRESHOLD * group_median_price(ds.column("mgn"))),
        (3, pa >= BULK_PA_THRESHOLD),
        (4, np.abs(ratio - 1.0) > MISMATCH_THRESHOLD),
        (5, pools.offender(ds.column("pgn"))),
    ]
    out = np.zeros(len(ds), dtype=np.int64)
    for archetype, hit in rules:
        if archetype > k:
            continue
        out = np.where((out == 0) & hit, archetype, out)
    return out


def bayes_accuracy(config: GeneratorConfig, task: str = "binary") -> float:
    """Best achievable accuracy under the planted rules and label noise.

    With fraud share ``r`` and noise ``e``, the clean-feature region holds
    ``(1 - r)(1 - e)`` clean labels and ``r e`` fraud labels, and each
    archetype region holds ``r (1 - e)`` fraud and ``(1 - r) e`` clean labels,
    so the binary ceiling is ``max((1-r)(1-e), r e) + max(r(1-e), (1-r) e)``,
    which is ``1 - e`` whenever ``e < min(r, 1 - r)``.

    On the fraud-only multiclass task, archetype regions are pure; the
    noisy records (share ``e``) carry clean features and uniformly drawn
    types, of which a classifier can get ``1 / k`` right:
    ``1 - e + e / k``.
    """
    e, r, k = config.label_noise, config.fraud_ratio, config.k_fraud
    if task == "binary":
        return max((1 - r) * (1 - e), r * e) + max(r * (1 - e), (1 - r) * e)
    if task == "multiclass":
        return 1.0 - e + e / k
    raise ValueError(f"unknown task {task!r}")
