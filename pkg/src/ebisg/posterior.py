"""BISG, BIFSG, and embedding-backed posterior computation.

The two Bayes formulas are implemented once, as a product of per-category
ratio terms; every method variant is a dispatch over which priors feed
them. Matched names always use the Census-table prior, so the embedding
variants are prediction-preserving on matched voters by construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, PriorError
from .races import N_RACES, RACES
from .tables import TableSet, VoterRecord, fullname_string, lookup_name

# Below this, a ratio term switches to log-space accumulation. Six factors
# at realistic probabilities cannot underflow, but the guard keeps the
# defensive path deterministic.
UNDERFLOW_GUARD = 1e-300


class MethodKind(enum.Enum):
    BISG = "bisg"
    BIFSG = "bifsg"
    SURNAME_EMBED = "surname-embed"
    SURNAME_FIRSTNAME_EMBED = "surname-firstname-embed"
    FULLNAME_EMBED = "fullname-embed"


class Scope(enum.Enum):
    UNMATCHED_ONLY = "unmatched"
    ALL = "all"


@dataclass(frozen=True)
class Method:
    """A prediction method: a formula/prior recipe plus its application scope."""

    kind: MethodKind
    scope: Scope = Scope.UNMATCHED_ONLY

    def __post_init__(self):
        if self.scope is Scope.ALL and self.kind is not MethodKind.FULLNAME_EMBED:
            raise ConfigError("scope=all is only valid for the fullname-embed method")

    @property
    def label(self) -> str:
        if self.kind is MethodKind.FULLNAME_EMBED and self.scope is Scope.ALL:
            return f"{self.kind.value}-all"
        return self.kind.value

    @staticmethod
    def parse(text: str) -> "Method":
        text = text.strip().lower()
        scope = Scope.UNMATCHED_ONLY
        if text.endswith("-all"):
            scope = Scope.ALL
            text = text[: -len("-all")]
        for kind in MethodKind:
            if kind.value == text:
                return Method(kind=kind, scope=scope)
        raise ConfigError(
            f"unknown method {text!r}; expected one of "
            + ", ".join(k.value for k in MethodKind)
        )


@dataclass(frozen=True)
class TaggedPrior:
    """A prior actually used for one name slot, tagged with where it came from."""

    source: str  # "census" | "embedding" | "marginal"
    dist: Optional[np.ndarray] = None  # None for the cancelling marginal prior


@dataclass(frozen=True)
class PriorBundle:
    """Audit record of the priors a posterior was computed from."""

    surname: Optional[TaggedPrior] = None
    firstname: Optional[TaggedPrior] = None
    fullname: Optional[TaggedPrior] = None


def _ratio_terms(marginal: np.ndarray, geo_dist: np.ndarray, priors: Sequence[np.ndarray]) -> np.ndarray:
    """Per-category geo_r * prod(prior_r) / marginal_r**len(priors), normalized.

    Categories where the marginal is zero are only admissible when every
    numerator factor is zero there; anything else indicates inconsistent
    tables and raises rather than silently renormalizing.
    """
    factors = [np.asarray(geo_dist, dtype=np.float64)] + [np.asarray(p, dtype=np.float64) for p in priors]
    m = np.asarray(marginal, dtype=np.float64)
    zero_m = m == 0.0
    if np.any(zero_m):
        for f in factors:
            bad = zero_m & (f != 0.0)
            if np.any(bad):
                idx = int(np.argmax(bad))
                raise PriorError(
                    f"marginal probability is zero for {RACES[idx]!r} but a prior is positive there"
                )
    nonzero_positive = [f[(f > 0.0)] for f in factors + [m]]
    tiny = any(arr.size and float(arr.min()) < UNDERFLOW_GUARD for arr in nonzero_positive)
    if tiny:
        terms = _log_space_terms(m, factors, len(priors))
    else:
        safe_m = np.where(zero_m, 1.0, m)
        terms = factors[0].copy()
        for p in factors[1:]:
            terms = terms * (p / safe_m)
        terms = np.where(zero_m, 0.0, terms)
    total = float(terms.sum())
    if total <= 0.0:
        raise PriorError("inconsistent priors: all posterior terms are zero")
    return terms / total


def _log_space_terms(m: np.ndarray, factors: list[np.ndarray], n_priors: int) -> np.ndarray:
    zero = np.zeros(N_RACES, dtype=bool)
    for f in factors:
        zero |= f == 0.0
    log_terms = np.full(N_RACES, -np.inf)
    ok = ~zero
    if np.any(ok):
        acc = np.zeros(int(ok.sum()))
        for f in factors:
            acc += np.log(f[ok])
        acc -= n_priors * np.log(m[ok])
        log_terms[ok] = acc
    if not np.any(np.isfinite(log_terms)):
        raise PriorError("inconsistent priors: all posterior terms are zero")
    shifted = log_terms - log_terms[np.isfinite(log_terms)].max()
    return np.where(np.isfinite(shifted), np.exp(shifted), 0.0)


def bisg_posterior(
    geo_dist: np.ndarray,
    surname_prior: Optional[np.ndarray],
    marginal: np.ndarray,
) -> np.ndarray:
    """Posterior P(R | G, S).

    With a surname prior s: result_r proportional to geo_r * s_r / marginal_r.
    Without one (the uncommon-surname branch) the marginal prior cancels
    and the result is exactly the geographic distribution.
    """
    if surname_prior is None:
        return np.asarray(geo_dist, dtype=np.float64).copy()
    return _ratio_terms(marginal, geo_dist, [surname_prior])


def bifsg_posterior(
    geo_dist: np.ndarray,
    surname_prior: Optional[np.ndarray],
    firstname_prior: Optional[np.ndarray],
    marginal: np.ndarray,
) -> np.ndarray:
    """Posterior P(R | F, G, S) across the four presence/absence cases.

    Omitting the first-name prior collapses to bisg_posterior exactly
    (same code path); omitting both returns the geographic distribution.
    """
    priors = [p for p in (surname_prior, firstname_prior) if p is not None]
    if not priors:
        return np.asarray(geo_dist, dtype=np.float64).copy()
    return _ratio_terms(marginal, geo_dist, priors)


def fullname_posterior(
    geo_dist: np.ndarray,
    fullname_prior: np.ndarray,
    marginal: np.ndarray,
) -> np.ndarray:
    """Posterior from a single full-name race prediction m: geo_r * m_r / marginal_r."""
    return _ratio_terms(marginal, geo_dist, [fullname_prior])


# --- method dispatch ----------------------------------------------------------


@dataclass(frozen=True)
class ModelSet:
    """Trained prior models, keyed by which name slot they serve.

    Each entry must expose predict(name) -> race distribution (see
    prior_model.PriorModel).
    """

    surname: Optional[object] = None
    firstname: Optional[object] = None
    fullname: Optional[object] = None


def _require_model(models: ModelSet, slot: str, method: Method):
    model = getattr(models, slot)
    if model is None:
        raise ConfigError(f"method {method.label!r} requires a {slot} prior model but none is loaded")
    return model


def ebisg_posterior(
    voter: VoterRecord,
    method: Method,
    tables: TableSet,
    models: ModelSet = ModelSet(),
) -> tuple[np.ndarray, PriorBundle]:
    """Posterior for one voter under a method, plus the priors actually used."""
    geo_dist = tables.geo.dist(voter.geo)
    marginal = tables.geo.marginal

    surname_hit = lookup_name(tables.surnames, voter.last)
    census_surname = TaggedPrior("census", surname_hit.dist) if surname_hit else None

    kind = method.kind
    if kind is MethodKind.BISG:
        prior = census_surname or TaggedPrior("marginal")
        post = bisg_posterior(geo_dist, prior.dist, marginal)
        return post, PriorBundle(surname=prior)

    if kind is MethodKind.SURNAME_EMBED:
        if census_surname is not None:
            prior = census_surname
        else:
            model = _require_model(models, "surname", method)
            prior = TaggedPrior("embedding", model.predict(voter.last))
        post = bisg_posterior(geo_dist, prior.dist, marginal)
        return post, PriorBundle(surname=prior)

    if kind in (MethodKind.BIFSG, MethodKind.SURNAME_FIRSTNAME_EMBED):
        if tables.firstnames is None:
            raise ConfigError(f"method {method.label!r} requires a first-name table")
        firstname_hit = lookup_name(tables.firstnames, voter.first) if voter.first else None
        census_firstname = TaggedPrior("census", firstname_hit.dist) if firstname_hit else None
        if kind is MethodKind.BIFSG:
            s_prior = census_surname or TaggedPrior("marginal")
            f_prior = census_firstname or TaggedPrior("marginal")
        else:
            if census_surname is not None:
                s_prior = census_surname
            else:
                model = _require_model(models, "surname", method)
                s_prior = TaggedPrior("embedding", model.predict(voter.last))
            if census_firstname is not None:
                f_prior = census_firstname
            elif voter.first.strip():
                model = _require_model(models, "firstname", method)
                f_prior = TaggedPrior("embedding", model.predict(voter.first))
            else:
                f_prior = TaggedPrior("marginal")  # no first name to embed
        post = bifsg_posterior(geo_dist, s_prior.dist, f_prior.dist, marginal)
        return post, PriorBundle(surname=s_prior, firstname=f_prior)

    if kind is MethodKind.FULLNAME_EMBED:
        apply_model = method.scope is Scope.ALL or census_surname is None
        if apply_model:
            model = _require_model(models, "fullname", method)
            prior = TaggedPrior("embedding", model.predict(fullname_string(voter)))
            post = fullname_posterior(geo_dist, prior.dist, marginal)
            return post, PriorBundle(fullname=prior)
        # Matched voter outside the model's scope: keep the Census-based
        # prediction, using both name tables when available.
        if tables.firstnames is not None:
            firstname_hit = lookup_name(tables.firstnames, voter.first) if voter.first else None
            f_prior = TaggedPrior("census", firstname_hit.dist) if firstname_hit else TaggedPrior("marginal")
            post = bifsg_posterior(geo_dist, census_surname.dist, f_prior.dist, marginal)
            return post, PriorBundle(surname=census_surname, firstname=f_prior)
        post = bisg_posterior(geo_dist, census_surname.dist, marginal)
        return post, PriorBundle(surname=census_surname)

    raise ConfigError(f"unhandled method kind {kind!r}")


# --- batch prediction ----------------------------------------------------------


@dataclass(frozen=True)
class Prediction:
    voter_id: str
    probs: np.ndarray
    match_surname: bool
    match_firstname: bool


@dataclass(frozen=True)
class BatchFailure:
    row: int
    voter_id: str
    error: str


@dataclass(frozen=True)
class PredictionSet:
    """Per-voter posteriors for one method, in input order, plus failures."""

    method: str
    rows: tuple[Prediction, ...]
    failures: tuple[BatchFailure, ...] = ()

    def __len__(self) -> int:
        return len(self.rows)


def batch_predict(
    voters: Sequence[VoterRecord],
    method: Method,
    tables: TableSet,
    models: ModelSet = ModelSet(),
) -> PredictionSet:
    """Predict every voter; per-record errors are collected, not fatal.

    Output order follows input order. Match-status flags are recorded for
    downstream stratified evaluation.
    """
    rows: list[Prediction] = []
    failures: list[BatchFailure] = []
    for i, voter in enumerate(voters):
        try:
            probs, _ = ebisg_posterior(voter, method, tables, models)
        except ConfigError:
            raise  # a missing model is a setup problem, not a data problem
        except Exception as exc:  # noqa: BLE001 - per-record isolation
            failures.append(BatchFailure(row=i, voter_id=voter.id, error=str(exc)))
            continue
        rows.append(
            Prediction(
                voter_id=voter.id,
                probs=probs,
                match_surname=lookup_name(tables.surnames, voter.last) is not None,
                match_firstname=(
                    tables.firstnames is not None
                    and bool(voter.first)
                    and lookup_name(tables.firstnames, voter.first) is not None
                ),
            )
        )
    return PredictionSet(method=method.label, rows=tuple(rows), failures=tuple(failures))


def write_predictions(preds: PredictionSet, path) -> None:
    """Emit the prediction CSV: probabilities printed with 6 decimal places."""
    import csv

    header = ["id", "method", "match_surname", "match_firstname"] + [f"p_{r}" for r in RACES]
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        for p in preds.rows:
            w.writerow(
                [p.voter_id, preds.method, int(p.match_surname), int(p.match_firstname)]
                + [f"{x:.6f}" for x in p.probs]
            )
