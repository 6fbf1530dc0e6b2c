"""Command-line driver.

Subcommands::

    gbsval generate-unitary --m 5 --seed 1 --out unitary.json
    gbsval sample    --config loss_small --out runs/loss_small
    gbsval enumerate --config loss_structure --out runs/loss_structure
    gbsval validate  --config loss_small --bona runs/loss_small/bona.ndjson --test runs/loss_small/samples_*.ndjson --out ...
    gbsval report    --inputs runs/loss_small/validate/*.json --out loss_small.csv

``--config`` accepts a JSON path or the name of a bundled preset. Every
output carries the config hash and seed; nothing time-dependent is written.
Sub-seeds come from ``SeedSequence(seed, spawn_key=(role, index))``.
"""
from __future__ import annotations

import argparse
import copy
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import io as gio
from .errors import GBSError, InvalidParameterError, ValidationInputError
from .gaussian import SqueezingSpec, haar_unitary
from .oracle import (
    bin_table,
    distinguishable_probabilities,
    distinguishable_tables,
    enumerate_ideal,
    lossy_probabilities,
    structure_stats,
)
from .gaussian import output_state
from .samplers import (
    SampleSet,
    sample_coherent,
    sample_distinguishable,
    sample_ideal,
    sample_lossy,
    sample_squashed,
    sample_thermal,
)
from .validation import (
    BinningPartition,
    bin_patterns,
    fit_gaussian_peak,
    gamma_deviation,
    sample_box_run,
    train_clusters,
)

MODELS = ("ideal", "loss", "distinguishable", "thermal", "coherent", "squashed")
# spawn-key roles for sub-seeds
ROLE_UNITARY, ROLE_SAMPLES, ROLE_BONA, ROLE_TRAIN, ROLE_BOX = range(5)


def sub_seed(seed: int, role: int, index: int = 0) -> int:
    ss = np.random.SeedSequence(int(seed), spawn_key=(role, index))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def load_config(ref: str) -> dict:
    """Load a config from a path or a bundled preset name (``loss_small``)."""
    path = Path(ref)
    if path.exists():
        return gio.load_json(path)
    name = ref if ref.endswith(".json") else ref + ".json"
    try:
        text = resources.files("gbsval").joinpath("presets", name).read_text()
    except (FileNotFoundError, OSError):
        raise gio.FileFormatError(f"no config file or preset named {ref!r}") from None
    return json.loads(text)


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = copy.deepcopy(cfg)
    samp = cfg.setdefault("sampling", {})
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "model", None):
        cfg["model"] = args.model
    if getattr(args, "eta", None) is not None:
        cfg["eta"] = [args.eta]
    if getattr(args, "bins", None):
        cfg.setdefault("validation", {})["partition"] = args.bins
    samp.setdefault("n_cutoff", 4)
    cfg.setdefault("seed", 1)
    if cfg.get("model", "ideal") not in MODELS:
        raise InvalidParameterError(f"unknown model {cfg.get('model')!r}; choose from {MODELS}")
    return cfg


def _spec(cfg: dict) -> SqueezingSpec:
    s = cfg["spec"]
    return SqueezingSpec(int(s["K"]), int(s["m"]), float(s["r"]))


def _interferometer(cfg: dict, unitary_path):
    if unitary_path:
        itf = gio.load_interferometer(unitary_path)
    else:
        useed = cfg.get("unitary_seed", sub_seed(cfg["seed"], ROLE_UNITARY))
        itf = haar_unitary(int(cfg["spec"]["m"]), int(useed))
    if itf.m != int(cfg["spec"]["m"]):
        raise ValidationInputError(f"unitary has {itf.m} modes, config expects {cfg['spec']['m']}")
    return itf


def _grid(cfg: dict) -> list:
    eta = cfg.get("eta", [1.0])
    return [float(e) for e in (eta if isinstance(eta, list) else [eta])]


def _tag(model: str, eta: float | None) -> str:
    return model if eta is None else f"{model}_{eta:.4f}"


def _draw(model: str, spec, itf, eta, n, cfg, seed, threads) -> SampleSet:
    samp = cfg["sampling"]
    c = int(samp["n_cutoff"])
    trunc = samp.get("truncation", "renormalize")
    if model == "ideal":
        return sample_ideal(spec, itf, n, c, seed, threads, trunc)
    if model == "loss":
        return sample_lossy(spec, itf, eta, n, c, seed, samp.get("loss_method", "thinning"), threads, trunc)
    if model == "distinguishable":
        return sample_distinguishable(spec, itf, eta, n, c, seed, samp.get("virtual_method", "multinomial"),
                                      threads)
    if model == "thermal":
        return sample_thermal(spec, itf, n, seed, c)
    if model == "coherent":
        return sample_coherent(spec, itf, float(samp.get("theta", 0.0)), n, seed, c, threads)
    return sample_squashed(spec, itf, n, c, seed, threads, trunc)


def _header(cfg: dict, itf=None, **extra) -> dict:
    head = {"config_hash": gio.config_hash(cfg), "config_seed": cfg["seed"], **extra}
    if itf is not None:
        head["unitary_hash"] = gio.config_hash({"T": gio.interferometer_to_json(itf)})
    return head


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------
def cmd_generate_unitary(m: int, seed: int, out) -> Path:
    return gio.save_interferometer(haar_unitary(m, seed), out)


def cmd_sample(cfg: dict, unitary=None, out=".", threads: int = 1) -> list[Path]:
    out = Path(out)
    spec = _spec(cfg)
    itf = _interferometer(cfg, unitary)
    model = cfg.get("model", "ideal")
    n = int(cfg["sampling"]["n_samples"])
    written = []
    models = [(model, None)] if model in ("ideal", "thermal", "coherent", "squashed") else \
        [(model, eta) for eta in _grid(cfg)]
    # a coupled grid reuses one seed, so sample i shares its stream at every noise level
    coupled = cfg["sampling"].get("couple_grid", True)
    for idx, (mdl, eta) in enumerate(models):
        seed = sub_seed(cfg["seed"], ROLE_SAMPLES, 0 if coupled else idx)
        s = _draw(mdl, spec, itf, eta, n, cfg, seed, threads)
        s.params["noise"] = eta
        written.append(gio.save_samples(s, out / f"samples_{_tag(mdl, eta)}.ndjson", _header(cfg, itf)))
    n_bona = cfg["sampling"].get("bona_samples")
    if n_bona:
        s = _draw("ideal", spec, itf, None, int(n_bona), cfg, sub_seed(cfg["seed"], ROLE_BONA), threads)
        written.append(gio.save_samples(s, out / "bona.ndjson", _header(cfg, itf)))
    return written


def _partitions(cfg: dict) -> list:
    parts = cfg.get("enumerate", {}).get("partitions") or [None]
    return [None if p is None else BinningPartition.parse(p) for p in parts]


def cmd_enumerate(cfg: dict, unitary=None, out=".") -> list[Path]:
    """Tables and structure statistics over the noise grid (and partitions)."""
    out = Path(out)
    spec = _spec(cfg)
    itf = _interferometer(cfg, unitary)
    model = cfg.get("model", "loss")
    c = int(cfg["sampling"]["n_cutoff"])
    en = cfg.get("enumerate", {})
    k, short, long_ = int(en.get("k", 10)), float(en.get("short", 0)), float(en.get("long", 3))
    written = []
    ideal = enumerate_ideal(output_state(spec, itf), c) if model in ("ideal", "loss") else None
    for eta in _grid(cfg):
        if model == "distinguishable":
            actual, virtuals = distinguishable_tables(spec, itf, eta, c)
            table = distinguishable_probabilities(actual, virtuals, c)
        elif model == "loss":
            table = lossy_probabilities(ideal, eta)
        else:
            table = ideal
        tag = _tag(model, eta)
        if en.get("write_tables", True):
            written.append(gio.save_table(table, out / f"table_{tag}.ndjson", _header(cfg, itf, model=model, noise=eta)))
        for part in _partitions(cfg):
            t = table if part is None else bin_table(table, part)
            st = structure_stats(t, k, short, long_)
            name = tag if part is None else f"{tag}_p{str(part).replace('|', '-').replace(',', '_')}"
            rec = {**_header(cfg, itf), "model": model, "noise": eta, "partition": None if part is None else str(part),
                   **st.as_dict()}
            written.append(gio.save_json(rec, out / f"stats_{name}.json"))
    return written


def _binned(s: SampleSet, part):
    return s if part is None else bin_patterns(s, part)


def cmd_validate(cfg: dict, bona_file, test_files, out=".") -> list[Path]:
    """Pattern-recognition (chi-square peaks) or correlation validation."""
    out = Path(out)
    val = cfg.get("validation", {})
    bona, bhead = gio.load_samples(bona_file)
    part = val.get("partition")
    part = BinningPartition.parse(part) if isinstance(part, str) else part
    written = []
    mode = val.get("mode", "pattern")
    if mode == "pattern":
        n_train = int(val.get("n_train", 3000))
        if len(bona) <= n_train:
            raise ValidationInputError(f"bona fide file needs more than {n_train} samples")
        bona_b = _binned(bona, part)
        train = bona_b.subset(slice(0, n_train))
        box = bona_b.subset(slice(n_train, None))
        model = train_clusters(train, int(val.get("k", 150)), sub_seed(cfg["seed"], ROLE_TRAIN))
    for tf in test_files:
        test, thead = gio.load_samples(tf)
        if test.m != bona.m or test.n_cutoff != bona.n_cutoff:
            raise ValidationInputError(f"{tf} is incompatible with the bona fide file (m or cutoff differ)")
        noise = test.params.get("noise")
        tag = Path(tf).stem.replace("samples_", "")
        head = _header(cfg, model=test.model, noise=noise, test_file=Path(tf).name,
                       partition=None if part is None else str(part))
        if mode == "pattern":
            tb = _binned(test, part)
            run = sample_box_run(model, box, tb, int(val.get("repetitions", 10000)),
                                 int(val.get("draw_size", 3000)), sub_seed(cfg["seed"], ROLE_BOX),
                                 val.get("expectation", "total"))
            pf = fit_gaussian_peak(run, int(val.get("n_bins", 50)))
            rows = [{"repetition": i, "chi2": float(x), "abandoned": float(a)}
                    for i, (x, a) in enumerate(zip(run.chi2_values, run.abandoned_fractions))]
            written.append(gio.rows_to_csv(rows, out / f"chi2_{tag}.csv", ["repetition", "chi2", "abandoned"]))
            rec = {**head, "X_c": pf.X_c, "sigma": pf.sigma, "center_err": pf.center_err,
                   "fit_residual": pf.fit_residual, "converged": pf.converged,
                   "abandoned_mean": float(run.abandoned_fractions.mean()), "draw_size": run.draw_size,
                   "repetitions": run.repetitions}
            written.append(gio.save_json(rec, out / f"peak_{tag}.json"))
        else:
            gammas = {}
            rows = []
            for t in range(1, int(val.get("t_max", 4)) + 1):
                rep = gamma_deviation(test, bona, t)
                gammas[str(t)] = rep.gamma
                rows += [{"t": t, "modes": " ".join(str(o + 1) for o in combo), "kappa_noise": kn,
                          "kappa_ideal": ki} for combo, (kn, ki) in rep.points.items()]
            written.append(gio.rows_to_csv(rows, out / f"kappa_{tag}.csv", ["t", "modes", "kappa_noise",
                                                                             "kappa_ideal"]))
            written.append(gio.save_json({**head, "gamma": gammas}, out / f"gamma_{tag}.json"))
    return written


REPORT_COLUMNS = ["noise", "model", "partition", "X_c", "sigma", "center_err", "abandoned_mean",
                  "gamma_1", "gamma_2", "gamma_3", "gamma_4", "top_k_mass", "mean_l2",
                  "short_tail_mass", "long_tail_mass", "config_hash"]


def cmd_report(inputs, out) -> Path:
    rows = []
    for p in inputs:
        rec = gio.load_json(p)
        if not isinstance(rec, dict) or "config_hash" not in rec or "noise" not in rec:
            raise gio.FileFormatError(f"{p} is not a result record")
        row = {k: rec.get(k, "") for k in REPORT_COLUMNS}
        for t, g in (rec.get("gamma") or {}).items():
            row[f"gamma_{t}"] = g
        rows.append(row)
    rows.sort(key=lambda r: (str(r["model"]), str(r["partition"]),
                             -1.0 if r["noise"] in ("", None) else float(r["noise"])))
    return gio.rows_to_csv(rows, out, REPORT_COLUMNS)


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gbsval", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-unitary", help="write a Haar-random interferometer")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)

    def common(p, unitary=True):
        p.add_argument("--config", required=True, help="config JSON path or preset name")
        if unitary:
            p.add_argument("--unitary", help="interferometer JSON (default: derived from the seed)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--model", choices=MODELS)
        p.add_argument("--eta", type=float, help="single noise level instead of the config grid")
        p.add_argument("--bins", help='binning partition such as "1,2|3,4|5"')

    s = sub.add_parser("sample", help="draw sample sets")
    common(s)
    s.add_argument("--threads", type=int, default=1)

    e = sub.add_parser("enumerate", help="exhaustive tables and structure statistics")
    common(e)

    v = sub.add_parser("validate", help="validate test samples against bona fide samples")
    common(v, unitary=False)
    v.add_argument("--bona", required=True)
    v.add_argument("--test", required=True, nargs="+")
    v.add_argument("--threads", type=int, default=1)

    r = sub.add_parser("report", help="merge result JSON files into one CSV")
    r.add_argument("--inputs", nargs="+", required=True)
    r.add_argument("--out", required=True)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate-unitary":
            paths = [cmd_generate_unitary(args.m, args.seed, args.out)]
        elif args.command == "report":
            paths = [cmd_report(args.inputs, args.out)]
        else:
            cfg = _apply_overrides(load_config(args.config), args)
            if args.command == "sample":
                if args.threads < 1:
                    raise InvalidParameterError("--threads must be >= 1")
                paths = cmd_sample(cfg, args.unitary, args.out, args.threads)
            elif args.command == "enumerate":
                if args.bins:
                    cfg.setdefault("enumerate", {})["partitions"] = [args.bins]
                paths = cmd_enumerate(cfg, args.unitary, args.out)
            else:
                paths = cmd_validate(cfg, args.bona, args.test, args.out)
    except GBSError as exc:
        print(f"gbsval: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"gbsval: I/O error: {exc}", file=sys.stderr)
        return 5
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
