"""Command-line pipelines: ingest, gen-synth, embed, train, predict, evaluate.

Every command validates its flags before doing any work, writes outputs
only under --out, and finishes by emitting a run manifest recording the
resolved configuration, the seed, and a digest of every input file.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path
from typing import Optional

from . import __version__
from .embedding import (
    NgramProvider,
    StoreProvider,
    build_store,
    load_embedding_store,
    ngram_provider_from_provenance,
    write_embedding_store,
)
from .errors import ConfigError, DataError, ToolkitError
from .evaluation import STRATA, method_comparison, write_report_bundle
from .posterior import Method, ModelSet, batch_predict, write_predictions
from .prior_model import (
    MlpArchitecture,
    PriorModel,
    SearchSpace,
    TrainingConfig,
    dataset_from_name_table,
    dataset_from_voters,
    hyperparameter_search,
    load_weights,
    save_weights,
    train,
)
from .races import RACES
from .synth import GeneratorConfig, generate_population, load_truth_labels, write_population
from .tables import (
    TableSet,
    coverage_report,
    load_geo_table,
    load_income_table,
    load_name_table,
    load_voters,
    normalize_name,
)

PROG = "ebisg"


class _UsageError(Exception):
    """Flag-level problem found after parsing; exits 2 like argparse errors."""


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Run:
    """Collects inputs and configuration for the run manifest."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.started = time.time()
        self.inputs: dict[str, str] = {}
        self.config = {
            k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")
        }

    def track(self, path) -> Path:
        path = Path(path)
        if not path.exists():
            raise DataError(f"{path}: file not found")
        self.inputs[str(path)] = _sha256(path)
        return path

    def write(self, outdir: Path) -> None:
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "config": {k: v for k, v in self.config.items()},
            "seed": self.config.get("seed"),
            "input_digests": self.inputs,
            "started": self.started,
            "finished": time.time(),
        }
        with open(outdir / "run_manifest.json", "w", encoding="utf-8") as f:
            json.dump(manifest, f, indent=2, default=str)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# --- provider / model wiring ----------------------------------------------------


def _build_provider(args, run: _Run):
    if args.store:
        store = load_embedding_store(run.track(args.store))
        fallback = ngram_provider_from_provenance(store.provenance)
        return StoreProvider(store=store, fallback=fallback)
    return NgramProvider(dim=args.dim, seed=args.ngram_seed)


def _load_model(path, args, run: _Run) -> PriorModel:
    weights = load_weights(run.track(path))
    provider = ngram_provider_from_provenance(weights.provenance)
    if provider is None:
        if not args.store:
            raise _UsageError(
                f"--store: model {path} was trained against provider "
                f"{weights.provenance!r}; pass the matching embedding store"
            )
        store = load_embedding_store(run.track(args.store))
        provider = StoreProvider(store=store, fallback=ngram_provider_from_provenance(store.provenance))
    return PriorModel(weights, provider)


def _build_models(args, run: _Run, method_labels: list[str]) -> ModelSet:
    needs_surname = any(m.startswith("surname") for m in method_labels)
    needs_firstname = any(m == "surname-firstname-embed" for m in method_labels)
    needs_fullname = any(m.startswith("fullname-embed") for m in method_labels)
    if needs_surname and not args.surname_weights:
        raise _UsageError("--surname-weights is required for surname-embedding methods")
    if needs_firstname and not args.firstname_weights:
        raise _UsageError("--firstname-weights is required for the surname-firstname-embed method")
    if needs_fullname and not args.fullname_weights:
        raise _UsageError("--fullname-weights is required for fullname-embed methods")
    return ModelSet(
        surname=_load_model(args.surname_weights, args, run) if needs_surname else None,
        firstname=_load_model(args.firstname_weights, args, run) if needs_firstname else None,
        fullname=_load_model(args.fullname_weights, args, run) if needs_fullname else None,
    )


def _load_tables(args, run: _Run, need_income: bool = False) -> TableSet:
    surnames = load_name_table(run.track(args.surnames), kind="surname")
    firstnames = (
        load_name_table(run.track(args.firstnames), kind="firstname") if args.firstnames else None
    )
    geo = load_geo_table(run.track(args.geo))
    income = load_income_table(run.track(args.income)) if getattr(args, "income", None) else None
    if need_income and income is None:
        raise _UsageError("--income is required for income-decile evaluation")
    return TableSet(surnames=surnames, geo=geo, firstnames=firstnames, income=income)


# --- commands ---------------------------------------------------------------------


def cmd_ingest(args) -> int:
    run = _Run("ingest", args)
    out = _outdir(args)
    if not (args.surnames or args.firstnames or args.geo or args.income or args.voters):
        raise _UsageError("ingest: pass at least one of --surnames/--firstnames/--geo/--income/--voters")
    summary: dict = {}
    surnames = firstnames = None
    if args.surnames:
        surnames = load_name_table(run.track(args.surnames), kind="surname")
        summary["surnames"] = {"names": len(surnames), "min_count": surnames.min_count}
    if args.firstnames:
        firstnames = load_name_table(run.track(args.firstnames), kind="firstname")
        summary["firstnames"] = {"names": len(firstnames), "min_count": firstnames.min_count}
    if args.geo:
        geo = load_geo_table(run.track(args.geo))
        summary["geo"] = {
            "units": len(geo.geo_ids),
            "population": float(geo.counts.sum()),
            "dropped_empty_units": geo.dropped_empty_units,
            "marginal": {race: geo.marginal[i] for i, race in enumerate(RACES)},
        }
    if args.income:
        income = load_income_table(run.track(args.income))
        summary["income"] = {"units": len(income.incomes)}
    if args.voters:
        voters = load_voters(run.track(args.voters))
        summary["voters"] = {"records": len(voters)}
        if surnames is not None and firstnames is not None:
            cov = coverage_report(surnames, firstnames, voters)
            summary["coverage"] = {
                status: {
                    "n": g.n,
                    "pct_of_total": g.pct_of_total,
                    "fn_matched_pct": g.fn_matched_pct,
                }
                for status, g in cov.groups.items()
            }
    with open(out / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2)
    for section, body in summary.items():
        print(f"{section}: {json.dumps(body, default=str)}")
    run.write(out)
    return 0


def cmd_gen_synth(args) -> int:
    run = _Run("gen-synth", args)
    out = _outdir(args)
    cfg = GeneratorConfig(
        seed=args.seed,
        n_geo=args.n_geo,
        geo_concentration=args.geo_concentration,
        census_threshold=args.census_threshold,
        interaction_strength=args.interaction,
        p_middle=args.p_middle,
    )
    pop = generate_population(cfg, args.n, sample_seed=args.sample_seed)
    manifest = write_population(pop, out)
    print(
        f"generated {args.n} voters over {len(pop.geo.geo_ids)} geounits; "
        f"surname-unmatched {100 * pop.unmatched_surname_share:.1f}%, "
        f"firstname-unmatched {100 * pop.unmatched_firstname_share:.1f}%"
    )
    print(f"tables: {len(pop.surnames)} surnames, {len(pop.firstnames)} first names")
    run.write(out)
    return 0


def cmd_embed(args) -> int:
    run = _Run("embed", args)
    out = _outdir(args)
    if bool(args.names) == bool(args.from_table):
        raise _UsageError("embed: pass exactly one of --names or --from-table")
    provider = NgramProvider(dim=args.dim, seed=args.ngram_seed)
    if args.names:
        path = run.track(args.names)
        with open(path, encoding="utf-8") as f:
            names = [normalize_name(line) for line in f if line.strip()]
        if not names:
            raise DataError(f"{path}: empty name list")
    else:
        table = load_name_table(run.track(args.from_table), kind="surname")
        names = sorted(table.entries)
    store = build_store(names, provider)
    write_embedding_store(store, out / "store.ebed")
    print(f"embedded {len(store)} names at dim {store.dim} -> {out / 'store.ebed'}")
    run.write(out)
    return 0


def _parse_hidden(text: str) -> tuple[int, ...]:
    try:
        widths = tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise _UsageError(f"--hidden: expected comma-separated integers, got {text!r}") from None
    if not widths:
        raise _UsageError("--hidden: needs at least one layer width")
    return widths


def cmd_train(args) -> int:
    run = _Run("train", args)
    out = _outdir(args)
    provider = _build_provider(args, run)
    if args.variant in ("surname", "firstname"):
        if not args.table:
            raise _UsageError(f"--table is required for the {args.variant} variant")
        table = load_name_table(run.track(args.table), kind=args.variant)
        dataset = dataset_from_name_table(table, provider)
    else:
        if not args.voters:
            raise _UsageError("--voters is required for the fullname variant")
        voters = load_voters(run.track(args.voters))
        labeled = [v for v in voters if v.race is not None]
        if not labeled:
            raise DataError(f"{args.voters}: no voter has a race label to train on")
        dataset = dataset_from_voters(labeled, provider)

    if args.trials > 0:
        space = SearchSpace(
            epochs=args.epochs,
            patience=args.patience,
            validation_fraction=args.val_fraction,
        )
        arch, cfg, leaderboard = hyperparameter_search(
            dataset, space, trials=args.trials, seed=args.seed,
            jobs=args.jobs, provenance=provider.provenance,
        )
        with open(out / "search.json", "w", encoding="utf-8") as f:
            json.dump(
                [
                    {
                        "trial": t.index,
                        "hidden": list(t.arch.hidden_layers),
                        "dropout": t.arch.dropout_rate,
                        "learning_rate": t.cfg.learning_rate,
                        "batch_size": t.cfg.batch_size,
                        "val_loss": t.val_loss,
                        "status": t.status,
                    }
                    for t in leaderboard
                ],
                f,
                indent=2,
            )
    else:
        arch = MlpArchitecture(
            input_dim=provider.dim,
            hidden_layers=_parse_hidden(args.hidden),
            dropout_rate=args.dropout,
        )
        cfg = TrainingConfig(
            learning_rate=args.lr,
            batch_size=args.batch_size,
            epochs=args.epochs,
            validation_fraction=args.val_fraction,
            seed=args.seed,
            patience=args.patience,
        )
    weights, report = train(dataset, arch, cfg, provenance=provider.provenance)
    save_weights(weights, out / "model.emlp")
    with open(out / "train_report.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "variant": args.variant,
                "examples": len(dataset),
                "hidden": list(arch.hidden_layers),
                "dropout": arch.dropout_rate,
                "learning_rate": cfg.learning_rate,
                "batch_size": cfg.batch_size,
                "best_epoch": report.best_epoch,
                "validation_cross_entropy": report.final_validation_loss,
                "train_loss": report.train_loss,
                "val_loss": report.val_loss,
                "wall_time_s": report.wall_time_s,
            },
            f,
            indent=2,
        )
    print(
        f"trained {args.variant} model on {len(dataset)} examples: "
        f"val CE {report.final_validation_loss:.4f} (best epoch {report.best_epoch}) "
        f"-> {out / 'model.emlp'}"
    )
    run.write(out)
    return 0


def cmd_predict(args) -> int:
    run = _Run("predict", args)
    out = _outdir(args)
    method = Method.parse(args.method)
    tables = _load_tables(args, run)
    if method.kind.value in ("bifsg", "surname-firstname-embed") and tables.firstnames is None:
        raise _UsageError(f"--firstnames is required for method {method.label!r}")
    models = _build_models(args, run, [method.label])
    voters = load_voters(run.track(args.voters))
    preds = batch_predict(voters, method, tables, models)
    write_predictions(preds, out / "predictions.csv")
    if preds.failures:
        with open(out / "failures.csv", "w", encoding="utf-8") as f:
            f.write("row,id,error\n")
            for fail in preds.failures:
                f.write(f"{fail.row},{fail.voter_id},{fail.error!r}\n")
    print(
        f"predicted {len(preds.rows)} voters with {method.label} "
        f"({len(preds.failures)} failures) -> {out / 'predictions.csv'}"
    )
    run.write(out)
    return 0


def cmd_evaluate(args) -> int:
    run = _Run("evaluate", args)
    out = _outdir(args)
    methods = [Method.parse(m) for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise _UsageError("--methods: needs at least one method")
    strata = [s.strip() for s in args.strata.split(",") if s.strip()]
    for s in strata:
        if s not in STRATA:
            raise _UsageError(f"--strata: unknown stratum {s!r}; choose from {','.join(STRATA)}")
    tables = _load_tables(args, run, need_income=False)
    models = _build_models(args, run, [m.label for m in methods])
    voters = load_voters(run.track(args.voters))
    if args.truth:
        truth = load_truth_labels(run.track(args.truth))
    else:
        truth = {v.id: v.race for v in voters if v.race is not None}
        if not truth:
            raise _UsageError("--truth is required when the voter file has no race labels")
    report = method_comparison(
        voters,
        truth,
        methods,
        tables,
        models,
        strata=strata,
        decile_mode=args.decile_mode,
        mae_min_group=args.mae_min_group,
        mae_count_mode=args.mae_count_mode,
    )
    write_report_bundle(report, out, extra_manifest={"seed": args.seed})
    for label, mres in report.methods.items():
        for stratum, sres in mres.strata.items():
            if sres.empty_reason:
                print(f"{label} [{stratum}]: {sres.empty_reason}")
            else:
                print(f"{label} [{stratum}]: n={sres.n} mean_brier={sres.mean_brier:.5f}")
    for label, err in report.failures.items():
        print(f"{label}: FAILED ({err})", file=sys.stderr)
    run.write(out)
    return 0


# --- parser -----------------------------------------------------------------------


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--seed", type=int, default=0, help="master seed; all randomness flows from it")
    sp.add_argument("--out", required=True, help="output directory (created if missing)")
    sp.add_argument("--jobs", type=int, default=1, help="worker cap for parallel sections")
    sp.add_argument("--config", default=None, help="key = value defaults file (flags win)")


def _add_provider_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--store", default=None, help="embedding store (.ebed) to read vectors from")
    sp.add_argument("--dim", type=int, default=256, help="n-gram embedding dimension")
    sp.add_argument("--ngram-seed", type=int, default=0, help="hash seed of the n-gram featurizer")


def _add_model_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--surname-weights", default=None, help="weights for the surname prior model")
    sp.add_argument("--firstname-weights", default=None, help="weights for the first-name prior model")
    sp.add_argument("--fullname-weights", default=None, help="weights for the full-name prior model")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Probabilistic race prediction from names and geography, "
        "with embedding-based priors for names missing from Census tables.",
        epilog="Config files hold 'key = value' lines ('#' comments) where keys "
        "are flag names without the leading dashes; explicit flags take precedence.",
    )
    parser.add_argument("--version", action="version", version=f"{PROG} {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parsers: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("ingest", help="validate and summarize input tables")
    _add_common(p)
    p.add_argument("--surnames")
    p.add_argument("--firstnames")
    p.add_argument("--geo")
    p.add_argument("--income")
    p.add_argument("--voters")
    p.set_defaults(func=cmd_ingest)
    parsers["ingest"] = p

    p = sub.add_parser("gen-synth", help="generate a synthetic population with known truth")
    _add_common(p)
    p.add_argument("--n", type=int, required=True, help="number of voters")
    p.add_argument("--sample-seed", type=int, default=None,
                   help="sampling seed; defaults to --seed (same world, different draw)")
    p.add_argument("--n-geo", type=int, default=60)
    p.add_argument("--geo-concentration", type=float, default=4.0)
    p.add_argument("--census-threshold", type=int, default=10)
    p.add_argument("--interaction", type=float, default=0.0,
                   help="first/last name coupling within race, in [0,1]")
    p.add_argument("--p-middle", type=float, default=0.5)
    p.set_defaults(func=cmd_gen_synth)
    parsers["gen-synth"] = p

    p = sub.add_parser("embed", help="build an embedding store from a name list")
    _add_common(p)
    p.add_argument("--names", default=None, help="text file, one name per line")
    p.add_argument("--from-table", default=None, help="name-table CSV whose keys to embed")
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--ngram-seed", type=int, default=0)
    p.set_defaults(func=cmd_embed)
    parsers["embed"] = p

    p = sub.add_parser("train", help="train a prior model (surname, firstname, or fullname)")
    _add_common(p)
    p.add_argument("--variant", required=True, choices=["surname", "firstname", "fullname"])
    p.add_argument("--table", default=None, help="name-table CSV (surname/firstname variants)")
    p.add_argument("--voters", default=None, help="labeled voter CSV (fullname variant)")
    _add_provider_flags(p)
    p.add_argument("--hidden", default="128,128", help="comma-separated hidden widths")
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--val-fraction", type=float, default=0.2)
    p.add_argument("--trials", type=int, default=0,
                   help="random-search trials; 0 trains the explicit architecture")
    p.set_defaults(func=cmd_train)
    parsers["train"] = p

    p = sub.add_parser("predict", help="batch posterior prediction for one method")
    _add_common(p)
    p.add_argument("--voters", required=True)
    p.add_argument("--surnames", required=True)
    p.add_argument("--firstnames", default=None)
    p.add_argument("--geo", required=True)
    p.add_argument("--method", required=True,
                   help="bisg | bifsg | surname-embed | surname-firstname-embed | "
                        "fullname-embed | fullname-embed-all")
    _add_model_flags(p)
    p.add_argument("--store", default=None, help="embedding store for non-ngram models")
    p.set_defaults(func=cmd_predict)
    parsers["predict"] = p

    p = sub.add_parser("evaluate", help="multi-method comparison with the full metric suite")
    _add_common(p)
    p.add_argument("--voters", required=True)
    p.add_argument("--truth", default=None, help="id,true_race CSV; defaults to voter race column")
    p.add_argument("--surnames", required=True)
    p.add_argument("--firstnames", default=None)
    p.add_argument("--geo", required=True)
    p.add_argument("--income", default=None)
    p.add_argument("--methods", default="bisg,bifsg",
                   help="comma-separated method list")
    p.add_argument("--strata", default="all,matched,unmatched")
    p.add_argument("--decile-mode", default="tracts", choices=["tracts", "voters"])
    p.add_argument("--mae-min-group", type=int, default=20)
    p.add_argument("--mae-count-mode", default="race", choices=["race", "total"])
    _add_model_flags(p)
    p.add_argument("--store", default=None, help="embedding store for non-ngram models")
    p.set_defaults(func=cmd_evaluate)
    parsers["evaluate"] = p

    return parser, parsers


def _load_config_file(path: str) -> dict[str, str]:
    p = Path(path)
    if not p.exists():
        raise DataError(f"{p}: config file not found")
    values: dict[str, str] = {}
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{p}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _apply_config_defaults(subparser: argparse.ArgumentParser, values: dict[str, str]) -> None:
    for action in subparser._actions:
        if action.dest in values and action.dest != "help":
            raw = values[action.dest]
            converted = action.type(raw) if callable(action.type) else raw
            subparser.set_defaults(**{action.dest: converted})
            action.required = False  # the config satisfied it


def main(argv: Optional[list[str]] = None) -> int:
    argv = list(sys.argv[1:]) if argv is None else list(argv)
    parser, parsers = build_parser()
    # Config files supply defaults, so they must be read before the real parse.
    if "--config" in argv:
        try:
            cfg_path = argv[argv.index("--config") + 1]
        except IndexError:
            parser.error("--config needs a path")
        try:
            values = _load_config_file(cfg_path)
        except DataError as exc:
            print(f"{PROG}: error: {exc}", file=sys.stderr)
            return 1
        for sp in parsers.values():
            _apply_config_defaults(sp, values)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"{PROG} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"{PROG} {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ToolkitError as exc:
        print(f"{PROG} {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
