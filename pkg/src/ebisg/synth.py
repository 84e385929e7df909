"""Synthetic populations with exactly known joint distributions.

The generator draws race, then geography, surname, and first name
conditionally on race, so the conditional-independence assumptions behind
the Bayes formulas hold by construction when ``interaction_strength`` is 0.

A positive interaction strength routes that share of voters through a
coupled channel built on name pools shared between race pairs: each pair
has two surname pools and two first-name pools, and the pool pairing is
crossed between the two races (one race combines surname pool 0 with
first-name pool 0, its partner combines pool 0 with pool 1). A pooled
surname or first name alone is therefore uninformative between the two
races, while the combination identifies the race exactly. This is the
controlled violation of F |- S | R that a full-name model can exploit and
per-part priors cannot.

Names are composed from race-specific character fragments (pool names
interleave the fragments of the two paired races), so an n-gram embedder
can genuinely learn the signal from held-out names. Fragment inventories
are fixed by the config, not the seed, so populations generated with
different seeds share the same surface semantics.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, PriorError
from .races import N_RACES, RACES, as_distribution
from .tables import (
    GeoTable,
    IncomeTable,
    NameEntry,
    NameTable,
    TableSet,
    VoterRecord,
    write_geo_table,
    write_income_table,
    write_name_table,
    write_voters,
)

# Latent channel per voter: 0 = independent race-specific names,
# 1 and 2 = the coupled channel's two pool pairings.
N_LATENTS = 3

RACE_PAIRS = ((0, 1), (2, 3), (4, 5))

# Stylized per-race fragment inventories; the two halves give each race's
# own names two sub-styles and give shared pools their building blocks.
DEFAULT_FRAGMENTS: tuple[tuple[str, ...], ...] = (
    ("WIL", "BER", "HART", "STRO", "MANN", "FELD", "SON",
     "BROOK", "MIL", "TON", "SHAW", "WOOD", "GRANT", "LEY"),
    ("JA", "DE", "TREV", "KEY", "MAL", "SHAWN", "VON",
     "LA", "DAR", "NELL", "MAR", "QUIS", "ISHA", "TAY"),
    ("GAR", "CIA", "TIN", "EZ", "LOP", "RAM", "IR",
     "FERN", "AND", "GOM", "ALVA", "REZ", "SOTO", "VAS"),
    ("NGU", "YEN", "TRAN", "PHAM", "HOANG", "VU", "DINH",
     "CHEN", "WANG", "LIN", "HUANG", "XU", "ZHAO", "LIU"),
    ("RED", "CLOUD", "RUN", "BEAR", "SWIFT", "EAGLE", "WIND",
     "HORSE", "LIT", "CROW", "RIVER", "TALL", "ELK", "DAWN"),
    ("AL", "HASH", "IM", "FAR", "ZAD", "NOOR", "KAL",
     "BEN", "SA", "RAH", "OMA", "DI", "YUS", "SEF"),
)

DEFAULT_RACE_PRIOR = (0.55, 0.13, 0.19, 0.08, 0.02, 0.03)

# Number of fragments per synthesized name and their sampling weights.
NAME_LENGTHS = (2, 3, 4)
NAME_LENGTH_WEIGHTS = (0.45, 0.40, 0.15)


@dataclass(frozen=True)
class GeneratorConfig:
    """Knobs of the synthetic world; the seed fixes everything else."""

    seed: int = 0
    race_prior: tuple[float, ...] = DEFAULT_RACE_PRIOR
    n_geo: int = 60
    geo_concentration: float = 4.0  # affinity of a tract for its profile race
    p_geo_given_race: Optional[tuple[tuple[float, ...], ...]] = None  # (6, n_geo) override
    fragments: tuple[tuple[str, ...], ...] = DEFAULT_FRAGMENTS
    surname_common_per_group: int = 96
    surname_rare_per_group: int = 1200
    firstname_common_per_group: int = 64
    firstname_rare_per_group: int = 800
    surname_rare_mass: float = 0.10
    firstname_rare_mass: float = 0.07
    pool_rare_mass_factor: float = 0.3  # shared-pool names skew common
    cross_race_mass: float = 0.04  # leak of every name distribution onto the full vocabulary
    firstname_cross_race_mass: float = 0.12  # first names blur more across races than surnames
    zipf_exponent: float = 0.5
    census_threshold: int = 10  # names sampled fewer times are left off the emitted tables
    interaction_strength: float = 0.0
    p_middle: float = 0.5
    income_base: float = 30_000.0
    income_slope: float = 60_000.0
    income_noise: float = 4_000.0

    def __post_init__(self):
        as_distribution(self.race_prior, where="race_prior")
        if len(self.fragments) != N_RACES:
            raise ConfigError(f"fragments must have {N_RACES} entries, got {len(self.fragments)}")
        for ri, frags in enumerate(self.fragments):
            if len(frags) < 4:
                raise ConfigError(
                    f"race {RACES[ri]!r} needs at least 4 fragments, got {len(frags)}"
                )
            if any(not f for f in frags):
                raise ConfigError(f"race {RACES[ri]!r} has an empty fragment")
        if not (0.0 <= self.interaction_strength <= 1.0):
            raise ConfigError(f"interaction_strength must be in [0,1], got {self.interaction_strength}")
        if not (0.0 <= self.cross_race_mass < 1.0):
            raise ConfigError("cross_race_mass must be in [0,1)")
        if not (0.0 <= self.firstname_cross_race_mass < 1.0):
            raise ConfigError("firstname_cross_race_mass must be in [0,1)")
        if not (0.0 <= self.pool_rare_mass_factor <= 1.0):
            raise ConfigError("pool_rare_mass_factor must be in [0,1]")
        if self.n_geo < 1:
            raise ConfigError("n_geo must be >= 1")
        if min(self.surname_common_per_group, self.surname_rare_per_group,
               self.firstname_common_per_group, self.firstname_rare_per_group) < 1:
            raise ConfigError("vocabulary sizes must be >= 1")

    @property
    def latent_weights(self) -> tuple[float, float, float]:
        lam = self.interaction_strength
        return (1.0 - lam, lam / 2.0, lam / 2.0)


@dataclass(frozen=True)
class NameUniverse:
    """One name vocabulary and its exact per-latent sampling distributions.

    p_given_rl[r, l, :] is P(name | race=r, latent=l).
    """

    names: tuple[str, ...]
    p_given_rl: np.ndarray  # (6, 3, V)
    index: dict[str, int]


@dataclass(frozen=True)
class Truth:
    """The generating process, exposed for exact oracle computation."""

    pi: np.ndarray  # (6,)
    latent_weights: np.ndarray  # (3,)
    geo_ids: tuple[str, ...]
    p_geo_given_race: np.ndarray  # (6, n_geo)
    surnames: NameUniverse
    firstnames: NameUniverse

    @property
    def marginal(self) -> np.ndarray:
        return self.pi

    @cached_property
    def surname_marginals(self) -> np.ndarray:
        """Exact P(name | race) for surnames, latent channel summed out."""
        return np.einsum("l,rlv->rv", self.latent_weights, self.surnames.p_given_rl)

    @cached_property
    def firstname_marginals(self) -> np.ndarray:
        return np.einsum("l,rlv->rv", self.latent_weights, self.firstnames.p_given_rl)

    def race_given_geo(self, geo_id: str) -> np.ndarray:
        g = self._geo_index(geo_id)
        w = self.pi * self.p_geo_given_race[:, g]
        return w / w.sum()

    def race_given_surname(self, name: str) -> np.ndarray:
        return self._race_given_name(self.surnames, self.surname_marginals, name)

    def race_given_firstname(self, name: str) -> np.ndarray:
        return self._race_given_name(self.firstnames, self.firstname_marginals, name)

    def _geo_index(self, geo_id: str) -> int:
        try:
            return self.geo_ids.index(geo_id)
        except ValueError:
            raise DataError(f"geo id {geo_id!r} not in truth vocabulary") from None

    def _race_given_name(self, universe: NameUniverse, marginals: np.ndarray, name: str) -> np.ndarray:
        try:
            i = universe.index[name]
        except KeyError:
            raise DataError(f"name {name!r} not in truth vocabulary") from None
        w = self.pi * marginals[:, i]
        total = w.sum()
        if total <= 0:
            raise PriorError(f"name {name!r} has probability zero under the generator")
        return w / total

    def exact_surname_table(self) -> NameTable:
        """NameTable holding the exact P(R | S) for every vocabulary name."""
        return self._exact_table(self.surnames, self.surname_marginals, "surname")

    def exact_firstname_table(self) -> NameTable:
        return self._exact_table(self.firstnames, self.firstname_marginals, "firstname")

    def _exact_table(self, universe: NameUniverse, marginals: np.ndarray, kind: str) -> NameTable:
        entries = {}
        weighted = self.pi[:, None] * marginals  # (6, V)
        totals = weighted.sum(axis=0)
        for i, name in enumerate(universe.names):
            if totals[i] <= 0:
                continue
            entries[name] = NameEntry(count=0, dist=weighted[:, i] / totals[i])
        return NameTable(kind=kind, entries=entries, min_count=0, source="synthetic-truth")

    def exact_geo_dists(self) -> np.ndarray:
        """Exact P(R | G) rows for every geounit."""
        w = self.pi[:, None] * self.p_geo_given_race  # (6, n_geo)
        return (w / w.sum(axis=0, keepdims=True)).T


def analytic_posterior(
    truth: Truth,
    surname: str,
    firstname: Optional[str],
    geo_id: str,
    conditioning: str = "gs",
) -> np.ndarray:
    """Exact P(R | ...) by enumerating the generator's joint distribution.

    ``conditioning`` selects {G,S} ("gs") or {G,S,F} ("gsf"). The latter
    sums over the latent channel, so it stays exact even when the
    interaction strength couples first and last names.
    """
    if conditioning not in ("gs", "gsf"):
        raise ConfigError(f"conditioning must be 'gs' or 'gsf', got {conditioning!r}")
    g = truth._geo_index(geo_id)
    try:
        s = truth.surnames.index[surname]
    except KeyError:
        raise DataError(f"surname {surname!r} not in truth vocabulary") from None
    w = truth.pi * truth.p_geo_given_race[:, g]
    if conditioning == "gs":
        w = w * truth.surname_marginals[:, s]
    else:
        if firstname is None:
            raise ConfigError("conditioning 'gsf' requires a first name")
        try:
            f = truth.firstnames.index[firstname]
        except KeyError:
            raise DataError(f"first name {firstname!r} not in truth vocabulary") from None
        # P(s, f | r) = sum_l P(l) P(s | r,l) P(f | r,l)
        joint_sf = np.einsum(
            "l,rl,rl->r",
            truth.latent_weights,
            truth.surnames.p_given_rl[:, :, s],
            truth.firstnames.p_given_rl[:, :, f],
        )
        w = w * joint_sf
    total = w.sum()
    if total <= 0:
        raise PriorError("zero-probability conditioning event")
    return w / total


@dataclass
class SyntheticPopulation:
    """Voters plus both views of the world: exact truth and census-style tables."""

    voters: list[VoterRecord]
    truth: Truth
    surnames: NameTable  # threshold-filtered empirical table
    firstnames: NameTable
    geo: GeoTable
    income: IncomeTable
    config: GeneratorConfig
    sample_seed: int
    unmatched_surname_share: float
    unmatched_firstname_share: float

    @property
    def tables(self) -> TableSet:
        return TableSet(surnames=self.surnames, geo=self.geo, firstnames=self.firstnames, income=self.income)


# --- construction of the generating process ----------------------------------


def _synthesize_names(
    rng: np.random.Generator,
    inventories: Sequence[Sequence[str]],
    count: int,
    taken: set[str],
) -> list[str]:
    """Draw ``count`` distinct names not already taken.

    With one inventory, every fragment comes from it; with two, fragment
    positions alternate between them (random phase) so every name visibly
    mixes both.
    """
    out: list[str] = []
    attempts = 0
    max_len = max(NAME_LENGTHS)
    while len(out) < count:
        if attempts > 200 * count + 2000:
            raise ConfigError(
                f"cannot synthesize {count} distinct names from inventories of sizes "
                f"{[len(inv) for inv in inventories]}; enlarge the fragments or shrink the vocabulary"
            )
        batch = max(count - len(out), 64)
        ks = rng.choice(NAME_LENGTHS, size=batch, p=NAME_LENGTH_WEIGHTS)
        picks = [rng.integers(0, len(inv), size=(batch, max_len)) for inv in inventories]
        phases = rng.integers(0, len(inventories), size=batch)
        for row in range(batch):
            parts = []
            for j in range(ks[row]):
                which = (phases[row] + j) % len(inventories)
                parts.append(inventories[which][picks[which][row, j]])
            name = "".join(parts)
            attempts += 1
            if name in taken:
                continue
            taken.add(name)
            out.append(name)
            if len(out) == count:
                break
    return out


def _zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = np.arange(1, n + 1, dtype=np.float64) ** -exponent
    return w / w.sum()


def _build_universe(
    rng: np.random.Generator,
    cfg: GeneratorConfig,
    common_per_group: int,
    rare_per_group: int,
    rare_mass: float,
    taken: set[str],
    cross_pools: bool,
    cross_race_mass: float,
) -> NameUniverse:
    """Build one vocabulary: per-race own names plus per-pair shared pools.

    ``cross_pools`` encodes the pairing direction: surnames map latent
    channel l to pool l-1 for both races of a pair, while first names swap
    the pool for the second race, producing the crossed combination.
    """

    def group_dist(names_slice_common, names_slice_rare, V, mass):
        d = np.zeros(V)
        n_common = names_slice_common.stop - names_slice_common.start
        d[names_slice_common] = (1.0 - mass) * _zipf_weights(n_common, cfg.zipf_exponent)
        d[names_slice_rare] = mass / (names_slice_rare.stop - names_slice_rare.start)
        return d

    names: list[str] = []
    own_slices = []
    for r in range(N_RACES):
        commons = _synthesize_names(rng, [cfg.fragments[r]], common_per_group, taken)
        c0 = len(names)
        names.extend(commons)
        r0 = len(names)
        names.extend(_synthesize_names(rng, [cfg.fragments[r]], rare_per_group, taken))
        own_slices.append((slice(c0, r0), slice(r0, len(names))))
    pool_slices = {}
    for p, (ra, rb) in enumerate(RACE_PAIRS):
        for u in range(2):
            half_a = _half(cfg.fragments[ra], u)
            half_b = _half(cfg.fragments[rb], u)
            commons = _synthesize_names(rng, [half_a, half_b], common_per_group, taken)
            c0 = len(names)
            names.extend(commons)
            r0 = len(names)
            names.extend(_synthesize_names(rng, [half_a, half_b], rare_per_group, taken))
            pool_slices[(p, u)] = (slice(c0, r0), slice(r0, len(names)))

    V = len(names)
    uniform = np.full(V, 1.0 / V)
    eps = cross_race_mass
    p_given_rl = np.zeros((N_RACES, N_LATENTS, V))
    pool_mass = rare_mass * cfg.pool_rare_mass_factor
    for r in range(N_RACES):
        own = group_dist(*own_slices[r], V, rare_mass)
        p_given_rl[r, 0] = (1.0 - eps) * own + eps * uniform
        p = r // 2
        pos = r % 2
        for l in (1, 2):
            u = l - 1
            pool_u = u if (not cross_pools or pos == 0) else 1 - u
            pool = group_dist(*pool_slices[(p, pool_u)], V, pool_mass)
            p_given_rl[r, l] = (1.0 - eps) * pool + eps * uniform
    return NameUniverse(
        names=tuple(names),
        p_given_rl=p_given_rl,
        index={name: i for i, name in enumerate(names)},
    )


def _half(frags: Sequence[str], u: int) -> list[str]:
    half = len(frags) // 2
    return list(frags[:half] if u == 0 else frags[half:])


def _build_geo_matrix(cfg: GeneratorConfig) -> np.ndarray:
    if cfg.p_geo_given_race is not None:
        m = np.asarray(cfg.p_geo_given_race, dtype=np.float64)
        if m.shape != (N_RACES, cfg.n_geo):
            raise ConfigError(f"p_geo_given_race must be ({N_RACES}, {cfg.n_geo}), got {m.shape}")
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise ConfigError("each race's geo distribution must be a probability vector")
        return m
    # Tracts cycle through "profile" races; a tract attracts its profile
    # race geo_concentration times more than the others.
    affinity = np.ones((N_RACES, cfg.n_geo))
    for g in range(cfg.n_geo):
        affinity[g % N_RACES, g] = cfg.geo_concentration
    return affinity / affinity.sum(axis=1, keepdims=True)


def build_truth(cfg: GeneratorConfig) -> Truth:
    """Materialize the exact generating process for a config."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0]))
    taken: set[str] = set()
    surnames = _build_universe(
        rng, cfg, cfg.surname_common_per_group, cfg.surname_rare_per_group,
        cfg.surname_rare_mass, taken, cross_pools=False,
        cross_race_mass=cfg.cross_race_mass,
    )
    firstnames = _build_universe(
        rng, cfg, cfg.firstname_common_per_group, cfg.firstname_rare_per_group,
        cfg.firstname_rare_mass, taken, cross_pools=True,
        cross_race_mass=cfg.firstname_cross_race_mass,
    )
    return Truth(
        pi=np.asarray(cfg.race_prior, dtype=np.float64),
        latent_weights=np.asarray(cfg.latent_weights, dtype=np.float64),
        geo_ids=tuple(f"T{g:04d}" for g in range(cfg.n_geo)),
        p_geo_given_race=_build_geo_matrix(cfg),
        surnames=surnames,
        firstnames=firstnames,
    )


# --- sampling -----------------------------------------------------------------


def _sample_categorical_by_group(
    rng: np.random.Generator,
    groups: np.ndarray,  # (n,) int group key
    n_groups: int,
    dists: np.ndarray,  # (n_groups, V)
) -> np.ndarray:
    out = np.empty(len(groups), dtype=np.int64)
    V = dists.shape[1]
    for k in range(n_groups):
        mask = groups == k
        cnt = int(mask.sum())
        if cnt:
            out[mask] = rng.choice(V, size=cnt, p=dists[k])
    return out


def generate_population(cfg: GeneratorConfig, n: int, sample_seed: Optional[int] = None) -> SyntheticPopulation:
    """Draw n voters from the configured process and emit census-style tables.

    ``sample_seed`` defaults to the config seed; giving different sample
    seeds under one config yields disjoint samples from the same world
    (same vocabularies and true tables), the way separate states share a
    national name universe.
    """
    if n < 1:
        raise ConfigError(f"population size must be >= 1, got {n}")
    truth = build_truth(cfg)
    if sample_seed is None:
        sample_seed = cfg.seed
    rng = np.random.default_rng(np.random.SeedSequence([sample_seed, 1]))

    races = rng.choice(N_RACES, size=n, p=truth.pi)
    latents = rng.choice(N_LATENTS, size=n, p=truth.latent_weights)
    geo_idx = _sample_categorical_by_group(rng, races, N_RACES, truth.p_geo_given_race)
    rl = races * N_LATENTS + latents
    s_dists = truth.surnames.p_given_rl.reshape(N_RACES * N_LATENTS, -1)
    f_dists = truth.firstnames.p_given_rl.reshape(N_RACES * N_LATENTS, -1)
    surname_idx = _sample_categorical_by_group(rng, rl, N_RACES * N_LATENTS, s_dists)
    first_idx = _sample_categorical_by_group(rng, rl, N_RACES * N_LATENTS, f_dists)
    middle_idx = _sample_categorical_by_group(rng, rl, N_RACES * N_LATENTS, f_dists)
    has_middle = rng.random(n) < cfg.p_middle

    voters = [
        VoterRecord(
            id=f"v{i:07d}",
            first=truth.firstnames.names[first_idx[i]],
            middle=truth.firstnames.names[middle_idx[i]] if has_middle[i] else "",
            last=truth.surnames.names[surname_idx[i]],
            geo=truth.geo_ids[geo_idx[i]],
            race=RACES[races[i]],
        )
        for i in range(n)
    ]

    surname_table = _empirical_name_table(truth.surnames, surname_idx, races, cfg.census_threshold, "surname")
    firstname_table = _empirical_name_table(truth.firstnames, first_idx, races, cfg.census_threshold, "firstname")
    geo_table = _empirical_geo_table(truth, geo_idx, races)
    income_table = _income_table(cfg, truth)

    matched_s = np.fromiter(
        (truth.surnames.names[surname_idx[i]] in surname_table.entries for i in range(n)), bool, count=n
    )
    matched_f = np.fromiter(
        (truth.firstnames.names[first_idx[i]] in firstname_table.entries for i in range(n)), bool, count=n
    )

    return SyntheticPopulation(
        voters=voters,
        truth=truth,
        surnames=surname_table,
        firstnames=firstname_table,
        geo=geo_table,
        income=income_table,
        config=cfg,
        sample_seed=sample_seed,
        unmatched_surname_share=float(1.0 - matched_s.mean()),
        unmatched_firstname_share=float(1.0 - matched_f.mean()),
    )


def _empirical_name_table(
    universe: NameUniverse,
    name_idx: np.ndarray,
    races: np.ndarray,
    threshold: int,
    kind: str,
) -> NameTable:
    V = len(universe.names)
    counts = np.zeros((V, N_RACES))
    np.add.at(counts, (name_idx, races), 1.0)
    totals = counts.sum(axis=1)
    entries = {}
    for i in np.flatnonzero(totals >= max(threshold, 1)):
        entries[universe.names[i]] = NameEntry(count=int(totals[i]), dist=counts[i] / totals[i])
    return NameTable(kind=kind, entries=entries, min_count=threshold, source="synthetic")


def _empirical_geo_table(truth: Truth, geo_idx: np.ndarray, races: np.ndarray) -> GeoTable:
    n_geo = len(truth.geo_ids)
    counts = np.zeros((n_geo, N_RACES))
    np.add.at(counts, (geo_idx, races), 1.0)
    keep = np.flatnonzero(counts.sum(axis=1) > 0)
    counts = counts[keep]
    geo_ids = tuple(truth.geo_ids[g] for g in keep)
    totals = counts.sum(axis=1, keepdims=True)
    return GeoTable(
        geo_ids=geo_ids,
        counts=counts,
        dists=counts / totals,
        marginal=counts.sum(axis=0) / counts.sum(),
        index={g: i for i, g in enumerate(geo_ids)},
        dropped_empty_units=n_geo - len(keep),
        source="synthetic",
    )


def _income_table(cfg: GeneratorConfig, truth: Truth) -> IncomeTable:
    """Median income as a deterministic function of the tract's exact racial
    mix plus seeded noise; creates the income gradients the Brier-by-decile
    pipeline is meant to surface."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 2]))
    mix = truth.exact_geo_dists()  # (n_geo, 6), P(R | G)
    incomes = cfg.income_base + cfg.income_slope * mix[:, 0] + cfg.income_noise * rng.standard_normal(len(mix))
    incomes = np.maximum(incomes, 1_000.0)
    return IncomeTable(
        incomes={gid: float(v) for gid, v in zip(truth.geo_ids, incomes)},
        source="synthetic",
    )


# --- emission -------------------------------------------------------------------


def write_population(pop: SyntheticPopulation, outdir) -> dict:
    """Write the canonical CSVs, the truth labels, and a manifest; returns the manifest."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    write_name_table(pop.surnames, outdir / "surnames.csv")
    write_name_table(pop.firstnames, outdir / "firstnames.csv")
    write_geo_table(pop.geo, outdir / "geo.csv")
    write_income_table(pop.income, outdir / "income.csv")
    write_voters(pop.voters, outdir / "voters.csv", include_race=True)
    with open(outdir / "truth.csv", "w", encoding="utf-8") as f:
        f.write("id,true_race\n")
        for v in pop.voters:
            f.write(f"{v.id},{v.race}\n")
    manifest = {
        "config": asdict(pop.config),
        "sample_seed": pop.sample_seed,
        "n": len(pop.voters),
        "race_order": list(RACES),
        "unmatched_surname_share": pop.unmatched_surname_share,
        "unmatched_firstname_share": pop.unmatched_firstname_share,
    }
    with open(outdir / "population.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    return manifest


def load_truth_labels(path) -> dict[str, str]:
    """Read the id -> true race CSV emitted alongside a population."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    labels: dict[str, str] = {}
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        if header != "id,true_race":
            raise DataError(f"{path}: bad header {header!r}, expected 'id,true_race'")
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields")
            vid, race = parts
            if race not in RACES:
                raise DataError(f"{path}:{lineno}: unknown race label {race!r}")
            labels[vid] = race
    if not labels:
        raise DataError(f"{path}: no rows")
    return labels
