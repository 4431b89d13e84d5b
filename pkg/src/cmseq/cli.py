"""``cmseq`` command-line front end.

Exit status: 0 on success, 1 for malformed input or failed validation, 2 for
numerical failures.  A covariance that is not positive definite counts as
numerical, whether it comes from the input file or from a computation.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import analysis, models, serialization, simulate, transforms
from .blockmat import DEFAULT_TOL
from .errors import CMSeqError, MalformedInput, NotPositiveDefinite

TOL_ENV = "CMSEQ_TOL"


def _env_tol():
    raw = os.environ.get(TOL_ENV)
    if raw is None:
        return None
    try:
        value = float(raw)
    except ValueError:
        raise MalformedInput(f"{TOL_ENV}={raw!r} is not a number") from None
    return value


def _tol(args, default: float = DEFAULT_TOL) -> float:
    """Flag, then ``CMSEQ_TOL``, then the command's default."""
    for value in (args.tol, _env_tol()):
        if value is not None:
            if not value > 0:
                raise MalformedInput(f"tolerance must be positive, got {value}")
            return value
    return default


def _read_model(path):
    return serialization.model_from_json(serialization.load(path))


def _emit(args, text: str):
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(args, obj):
    _emit(args, serialization.dumps(obj))


def _markov_in(path) -> models.MarkovModel:
    m = _read_model(path)
    if not isinstance(m, models.MarkovModel):
        raise MalformedInput(f"{path}: expected a markov model, got {serialization.model_kind(m)}")
    return m


# --- subcommands ------------------------------------------------------------------

def cmd_induce(args):
    m = _markov_in(args.inp)
    out = transforms.induce_cml_from_markov(m)
    if args.with_boundary:
        out = out.with_boundary(transforms.markov_matching_boundary(m))
    _emit_json(args, serialization.model_to_json(out))


def cmd_boundary(args):
    b = transforms.markov_matching_boundary(_markov_in(args.inp))
    initial = models.to_initial_form(b)
    _emit_json(args, {
        "boundary": serialization.boundary_to_json(b),
        "initial_form": {
            "initial_cov": initial.initial_cov.tolist(),
            "terminal_gain": initial.terminal_gain.tolist(),
            "terminal_cov": initial.terminal_cov.tolist(),
        },
    })


def cmd_recover(args):
    m = _read_model(args.inp)
    if not (isinstance(m, models.CMcModel) and m.direction == "L"):
        raise MalformedInput(f"{args.inp}: expected a cml model")
    out = transforms.recover_markov_from_reciprocal_cml(m, _tol(args))
    _emit_json(args, serialization.model_to_json(out))


def cmd_decompose(args):
    m = _read_model(args.inp)
    if not isinstance(m, models.CMcModel):
        raise MalformedInput(f"{args.inp}: expected a cml or cmf model")
    r = transforms.decompose_to_representation(m)
    _emit_json(args, serialization.representation_to_json(r))


def cmd_construct(args):
    r = serialization.representation_from_json(serialization.load(args.inp))
    _emit_json(args, serialization.model_to_json(transforms.construct_from_representation(r)))


def cmd_check(args):
    m = _read_model(args.inp)
    tol = _tol(args)
    report = models.validate(m, min_horizon=1)
    if not report.valid:
        _emit_json(args, report.to_json())
        return 2 if any(i.code == "NotPositiveDefinite" for i in report.issues) else 1
    out = {"kind": serialization.model_kind(m), "tol": tol}
    if isinstance(m, models.MarkovModel):
        out.update(reciprocal=True, markov=True)
    elif isinstance(m, models.CMcModel):
        rec = models.check_reciprocal_condition(m, tol)
        out["reciprocal"] = rec.holds
        out["residuals"] = {"reciprocal": rec.to_json()}
        if m.direction == "L" and m.boundary is None:
            out["markov"] = None
        else:
            mk = models.check_markov_condition(m, tol)
            out["markov"] = mk.holds
            out["residuals"]["markov"] = mk.to_json()
        if args.k1 is not None:
            win = models.check_window_cmf_condition(m, args.k1, tol)
            out["window_cmf"] = {"k1": args.k1, "holds": win.holds, **win.to_json()}
        if m.boundary is not None:
            r = transforms.decompose_to_representation(m)
            out["representation_class"] = transforms.classify_representation(r, tol)
    else:
        inter = models.check_intersection_conditions(m, tol)
        out["cml"] = inter.holds
        out["residuals"] = {"intersection": inter.to_json()}
    _emit_json(args, out)


def cmd_assemble(args):
    m = _read_model(args.inp)
    if args.covariance:
        J = simulate.analytic_covariance(m)
        kind = "covariance"
    else:
        J = analysis.assemble_precision(m)
        kind = "precision"
    _emit_json(args, serialization.matrix_to_json(J, kind))


def cmd_classify(args):
    obj = serialization.load(args.inp)
    M = serialization.matrix_from_json(obj)
    kind = args.as_kind or (obj.get("kind") if isinstance(obj, dict) else None) or "covariance"
    if kind not in ("covariance", "precision"):
        raise MalformedInput(f"{args.inp}: kind must be 'covariance' or 'precision', got {kind!r}")
    C = analysis.precision_of(M) if kind == "precision" else M
    result = analysis.classify_sequence(C, _tol(args, analysis.CLASSIFY_TOL))
    _emit_json(args, result.to_json())


def cmd_sample(args):
    batch = simulate.sample_trajectories(_read_model(args.inp), args.samples, args.seed, args.workers)
    _emit(args, batch.to_csv())


def cmd_mc_verify(args):
    report = simulate.monte_carlo_check(_read_model(args.inp), args.samples, args.seed, args.n_se)
    _emit_json(args, report.to_json())


def cmd_destgen(args):
    obj = serialization.load(args.inp)
    motion = serialization.model_from_json(obj)
    if not isinstance(motion, models.MarkovModel):
        raise MalformedInput(f"{args.inp}: expected a markov motion model")
    if args.endpoints:
        joint = serialization.endpoint_joint_from_json(serialization.load(args.endpoints), motion.d, "endpoints")
    elif "boundary" in obj:
        joint = serialization.endpoint_joint_from_json(obj["boundary"], motion.d, "model.boundary")
    else:
        raise MalformedInput(f"{args.inp}: no 'boundary' endpoint law and no --endpoints file")
    model, batch = simulate.destination_directed_generate(motion, joint, args.samples, args.seed)
    if args.model_out:
        with open(args.model_out, "w", encoding="utf-8") as fh:
            fh.write(serialization.dumps(serialization.model_to_json(model)))
    _emit(args, batch.to_csv())


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmseq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, out=True, tol=False):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--in", dest="inp", required=True, help="input JSON file")
        if out:
            p.add_argument("--out", help="output file (default: stdout)")
        if tol:
            p.add_argument("--tol", type=float, default=None,
                           help=f"tolerance (default: ${TOL_ENV} or the command default)")
        p.set_defaults(func=func)
        return p

    p = add("induce", cmd_induce, "markov model -> induced CM_L interior")
    p.add_argument("--with-boundary", action="store_true",
                   help="attach the boundary that reproduces the Markov law")
    add("boundary", cmd_boundary, "markov model -> Markov-matching CM_L boundary")
    add("recover", cmd_recover, "reciprocal CM_L model -> Markov model", tol=True)
    add("decompose", cmd_decompose, "CM_c model -> Markov-plus-endpoint representation")
    add("construct", cmd_construct, "representation -> CM_c model")
    p = add("check", cmd_check, "class conditions on model parameters", tol=True)
    p.add_argument("--k1", type=int, default=None, help="also test the [k1,N]-CM_F window (cml only)")
    p = add("assemble", cmd_assemble, "model -> joint precision matrix")
    p.add_argument("--covariance", action="store_true", help="emit the joint covariance instead")
    p = add("classify", cmd_classify, "matrix -> sequence classification", tol=True)
    p.add_argument("--as", dest="as_kind", choices=("covariance", "precision"), default=None,
                   help="how to read the matrix (default: its 'kind' field, else covariance)")
    for name, func, help_text in (
        ("sample", cmd_sample, "model -> trajectories CSV"),
        ("mc-verify", cmd_mc_verify, "Monte-Carlo vs analytic covariance report"),
        ("destgen", cmd_destgen, "motion model + endpoint law -> CM_L model and trajectories CSV"),
    ):
        p = add(name, func, help_text)
        p.add_argument("--samples", type=int, default=10_000)
        p.add_argument("--seed", type=int, default=0)
        if name == "sample":
            p.add_argument("--workers", type=int, default=1)
        if name == "mc-verify":
            p.add_argument("--n-se", type=float, default=4.0, help="allowed standard errors")
        if name == "destgen":
            p.add_argument("--endpoints", help="JSON with cov_x0, cov_xN, cross")
            p.add_argument("--model-out", help="write the generated CM_L model here")
    return parser


def _check_paths(args):
    ins = {os.path.abspath(p) for p in (args.inp, getattr(args, "endpoints", None)) if p}
    for name in ("out", "model_out"):
        path = getattr(args, name, None)
        if path and os.path.abspath(path) in ins:
            raise MalformedInput(f"--{name.replace('_', '-')} would overwrite an input file")
    if getattr(args, "samples", 1) < 1:
        raise MalformedInput("--samples must be >= 1")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _check_paths(args)
        status = args.func(args)
    except NotPositiveDefinite as exc:
        print(f"cmseq: numerical failure: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"cmseq: numerical failure: {exc}", file=sys.stderr)
        return 2
    except (CMSeqError, OSError) as exc:
        print(f"cmseq: {exc}", file=sys.stderr)
        return 1
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
