"""Command-line frontend: analyze, fix, and trace subcommands.

Exit codes form a small contract for CI embedding:
  0  Jacobian generically nonsingular / conversion succeeded
  1  usage, parse, or file errors; a forced vector that fails verification
  2  singular Jacobian (analyze), no method applies, or a forced step
     rejected by a method condition
  3  structurally ill posed input, or a conversion exposed ill-posedness
  4  result rests on an unproven zero test (unverified)
"""

import argparse
import hashlib
import json
import sys

from .convert import (ConditionRejected, ConvertError, FixStatus, MethodKind,
                      PivotRejected, VectorRejected, fix_dae)
from .dsl import ParseError, emit_dae, parse_dae, parse_expr
from .expr import NEG_INF, ZERO, Add, Mul, format_expr, simplify
from .jacobian import JacobianClass, classify_jacobian, system_jacobian
from .model import ModelError
from .render import (CLASS_LABELS, render_equations, render_jacobian,
                     render_scheme, render_sigma, render_step)
from .structural import (canonical_offsets, degrees_of_freedom,
                         signature_matrix, solution_scheme, structural_index)
from .zerotest import Prober

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SINGULAR = 2
EXIT_ILL_POSED = 3
EXIT_UNVERIFIED = 4

_EPILOG = """exit codes:
  0  generically nonsingular / fixed
  1  usage, parse, or vector-verification error
  2  singular, no method applies, or condition rejected a forced step
  3  structurally ill posed
  4  unverified: a zero test ran out of probe budget
"""


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="daefix",
        description="Structural analysis of DAE systems with automatic "
                    "repair of identically singular System Jacobians.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("path", help="input system in .dae format")
    common.add_argument("--mode", choices=("true", "formal"), default="true",
                        help="signature source: simplified (true) or "
                             "as-written (formal) equations")
    common.add_argument("--probe-budget", type=int, default=8, metavar="N",
                        help="probe points per zero test")
    common.add_argument("--seed", default="daefix",
                        help="seed for the zero-test probes")
    common.add_argument("--json", metavar="OUT", dest="json_path",
                        help="write a machine-readable report")

    pa = sub.add_parser("analyze", parents=[common],
                        help="signature matrix, offsets, scheme, Jacobian")
    pa.set_defaults(func=cmd_analyze)

    pf = sub.add_parser("fix", parents=[common],
                        help="repair an identically singular Jacobian")
    pf.add_argument("--method", choices=("lc", "es"),
                    help="restrict every step to one rewrite")
    pf.add_argument("--max-steps", type=int, metavar="N",
                    help="step budget (default: initial value + 1)")
    pf.add_argument("--emit", metavar="OUT", help="write the converted "
                    "system in .dae format")
    pf.set_defaults(func=cmd_fix)

    pt = sub.add_parser("trace", parents=[common],
                        help="apply exactly one forced conversion step")
    pt.add_argument("--method", choices=("lc", "es"), required=True)
    pt.add_argument("--vector", required=True,
                    help="null vector, e.g. \"[x2, x1, 1, -1]\"")
    pt.add_argument("--pivot", type=int, metavar="L",
                    help="1-based pivot equation (lc) or variable (es)")
    pt.add_argument("--emit", metavar="OUT", help="write the converted "
                    "system in .dae format")
    pt.set_defaults(func=cmd_trace)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as ex:
        return EXIT_USAGE if ex.code else EXIT_OK
    try:
        return args.func(args)
    except (OSError, ParseError, ModelError) as ex:
        print("error: %s" % ex, file=sys.stderr)
        return EXIT_USAGE
    except VectorRejected as ex:
        print("vector rejected: %s" % ex, file=sys.stderr)
        return EXIT_USAGE
    except (ConditionRejected, PivotRejected) as ex:
        print("step rejected: %s" % ex, file=sys.stderr)
        return EXIT_SINGULAR
    except ConvertError as ex:
        print("conversion failed: %s" % ex, file=sys.stderr)
        return EXIT_SINGULAR


def _load(path):
    with open(path, "rb") as fh:
        data = fh.read()
    system = parse_dae(data.decode("utf-8"))
    return system, hashlib.sha256(data).hexdigest()


def _prober(args) -> Prober:
    return Prober(budget=args.probe_budget, seed=args.seed)


def _write_json(args, doc):
    if args.json_path:
        with open(args.json_path, "w") as fh:
            json.dump(doc, fh, indent=2)
            fh.write("\n")


def _num(v):
    # -inf marks a lost transversal; JSON carries null there
    if v is None or v == float("-inf"):
        return None
    return v


def _sigma_json(sig):
    entries = [[None if s == NEG_INF else s for s in row]
               for row in sig.rows]
    hvt = [[i + 1, j + 1] for i, j in sig.hvt] if sig.hvt else None
    return {"entries": entries, "hvt": hvt,
            "value": None if not sig.swp else sig.value}


def _scheme_json(system, scheme):
    marked = [(st, False) for st in scheme.stages]
    marked.append((scheme.generic, True))
    out = []
    for st, generic in marked:
        out.append({
            "k": st.k,
            "generic": generic,
            "solve": [[system.equations[i].name, o] for i, o in st.equations],
            "unknowns": [[system.var_names[j], o] for j, o in st.unknowns],
            "linear": st.linear,
        })
    return out


def _system_json(system):
    return {
        "name": system.name,
        "variables": list(system.var_names),
        "equations": [{
            "name": eq.name,
            "expression": format_expr(eq.expr, system.var_names),
            "origin": eq.origin,
            "alias": eq.alias,
        } for eq in system.equations],
    }


def _jacobian_json(system, matrix):
    return [["0" if e == ZERO else format_expr(e, system.var_names)
             for e in row] for row in matrix]


def _det_string(system, rep):
    if rep is None or rep.det is None:
        return None
    return format_expr(simplify(rep.det), system.var_names)


# ---------------------------------------------------------------------------
# analyze

def cmd_analyze(args) -> int:
    system, digest = _load(args.path)
    prober = _prober(args)
    true_sig = signature_matrix(system)
    formal_sig = signature_matrix(system, formal=True)
    sig = formal_sig if args.mode == "formal" else true_sig
    doc = {
        "kind": "analysis",
        "name": system.name,
        "input_sha256": digest,
        "mode": args.mode,
        "variables": list(system.var_names),
        "equations": [eq.name for eq in system.equations],
        "sigma_true": _sigma_json(true_sig),
        "sigma_formal": _sigma_json(formal_sig),
    }
    print("system %s: %d equations" % (system.name, system.n))
    if not sig.swp:
        doc.update(classification="StructurallyIllPosed", offsets=None,
                   value=None, structural_index=None, dof=None, scheme=None,
                   jacobian=None, determinant=None,
                   uncertain=prober.uncertain_seen)
        _write_json(args, doc)
        print("no highest-value transversal: structurally ill posed")
        return EXIT_ILL_POSED
    off = canonical_offsets(sig)
    scheme = solution_scheme(system, off)
    J = system_jacobian(system, sig, off)
    rep = classify_jacobian(J, prober)
    print()
    print(render_sigma(system, sig, off))
    print()
    print("value %d   structural index %d   degrees of freedom %d"
          % (sig.value, structural_index(off), degrees_of_freedom(off)))
    print()
    print("solution scheme:")
    print(render_scheme(system, scheme))
    print()
    print("System Jacobian:")
    print(render_jacobian(system, J))
    det_str = _det_string(system, rep)
    if det_str is not None:
        print("det(J) = %s" % det_str)
    print("classification: %s" % CLASS_LABELS[rep.klass])
    if prober.uncertain_seen:
        print("confidence: unverified (a zero test ran out of probe budget)")
    doc.update(
        offsets={"c": list(off.c), "d": list(off.d)},
        value=sig.value,
        structural_index=structural_index(off),
        dof=degrees_of_freedom(off),
        scheme=_scheme_json(system, scheme),
        jacobian=_jacobian_json(system, J),
        determinant=det_str,
        classification=CLASS_LABELS[rep.klass],
        uncertain=prober.uncertain_seen,
    )
    _write_json(args, doc)
    if rep.klass is JacobianClass.GENERICALLY_NONSINGULAR:
        return EXIT_UNVERIFIED if prober.uncertain_seen else EXIT_OK
    if rep.klass is JacobianClass.PROBABLY_SINGULAR:
        return EXIT_UNVERIFIED
    return EXIT_SINGULAR


# ---------------------------------------------------------------------------
# fix / trace

def _conversion_doc(args, system, digest, report):
    steps = []
    before = system
    for st in report.steps:
        app = st.application
        entry = {
            "index": st.index,
            "method": st.kind.value,
            "pivot": st.pivot + 1,
            "pivot_name": (before.equations[st.pivot].name
                           if st.kind is MethodKind.LC
                           else before.var_names[st.pivot]),
            "grade": st.grade,
            "vector": [format_expr(e, before.var_names) for e in st.vector],
            "value_before": _num(st.value_before),
            "value_after": _num(st.value_after),
        }
        if st.kind is MethodKind.LC:
            entry["replaced"] = st.system.equations[st.pivot].name
        else:
            entry["added"] = [{
                "variable": rec.var_name,
                "equation": rec.eq_name,
                "alias": rec.alias,
                "definition": format_expr(rec.definition, before.var_names),
            } for rec in app.renamed]
            entry["rewritten"] = [st.system.equations[i].name
                                  for i in app.rewritten]
        steps.append(entry)
        before = st.system
    final = {
        "classification": (CLASS_LABELS[report.jacobian.klass]
                           if report.jacobian else "StructurallyIllPosed"),
        "determinant": _det_string(report.system, report.jacobian),
        "offsets": ({"c": list(report.offsets.c), "d": list(report.offsets.d)}
                    if report.offsets else None),
        "value": _num(report.final_value),
    }
    return {
        "kind": "conversion",
        "name": system.name,
        "input_sha256": digest,
        "mode": args.mode,
        "status": report.status.value,
        "initial_value": _num(report.initial_value),
        "final_value": _num(report.final_value),
        "uncertain": report.uncertain,
        "steps": steps,
        "system": _system_json(report.system),
        "final": final,
    }


def _print_fix(system, report):
    sig = signature_matrix(system)
    if sig.swp:
        print(render_sigma(system, sig, canonical_offsets(sig)))
        print()
    before = system
    for st in report.steps:
        print(render_step(st, before))
        print()
        before = st.system
    if report.status is FixStatus.SUCCESS:
        if report.steps:
            print("fixed in %d step%s, value %s -> %s"
                  % (len(report.steps), "s" if len(report.steps) != 1 else "",
                     report.initial_value, report.final_value))
        else:
            print("nothing to do: System Jacobian already generically "
                  "nonsingular")
        det_str = _det_string(report.system, report.jacobian)
        if det_str is not None:
            print("det(J) = %s" % det_str)
    elif report.status is FixStatus.ILL_POSED:
        if report.steps:
            print("ill posed: the rewrite at step %d removed the last "
                  "transversal, so the original system has no solution "
                  "scheme" % len(report.steps))
        else:
            print("structurally ill posed: no highest-value transversal")
    elif report.status is FixStatus.NO_METHOD:
        print("no method applies at step %d: neither rewrite accepts the "
              "null vectors found" % (len(report.steps) + 1))
    else:
        print("step budget exhausted after %d step%s; Jacobian still "
              "singular" % (len(report.steps),
                            "s" if len(report.steps) != 1 else ""))
    print()
    print("resulting system:")
    print(render_equations(report.system))
    if report.uncertain:
        print("confidence: unverified (a zero test ran out of probe budget)")


def _emit(args, report):
    if getattr(args, "emit", None):
        with open(args.emit, "w") as fh:
            fh.write(emit_dae(report.system))


def _fix_exit(report) -> int:
    if report.status is FixStatus.SUCCESS:
        return EXIT_UNVERIFIED if report.uncertain else EXIT_OK
    if report.status is FixStatus.ILL_POSED:
        return EXIT_ILL_POSED
    return EXIT_SINGULAR


def cmd_fix(args) -> int:
    system, digest = _load(args.path)
    prober = _prober(args)
    report = fix_dae(system, prober=prober, method=args.method,
                     max_steps=args.max_steps,
                     formal=args.mode == "formal")
    _print_fix(system, report)
    _write_json(args, _conversion_doc(args, system, digest, report))
    _emit(args, report)
    return _fix_exit(report)


def _split_top_level(text):
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return [p.strip() for p in parts]


def _parse_vector(text, system):
    body = text.strip()
    if body.startswith("[") and body.endswith("]"):
        body = body[1:-1]
    pieces = [p for p in _split_top_level(body) if p]
    if not pieces:
        raise ParseError("empty vector")
    return [parse_expr(p, system) for p in pieces]


def _show_residual(system, vec, left):
    sig = signature_matrix(system)
    off = canonical_offsets(sig)
    J = system_jacobian(system, sig, off)
    n = system.n
    for k in range(n):
        if left:
            terms = [Mul((vec[i], J[i][k])) for i in range(n)]
        else:
            terms = [Mul((J[k][j], vec[j])) for j in range(n)]
        r = simplify(terms[0] if len(terms) == 1 else Add(tuple(terms)))
        if r != ZERO:
            print("  residual[%d] = %s"
                  % (k + 1, format_expr(r, system.var_names)),
                  file=sys.stderr)


def cmd_trace(args) -> int:
    system, digest = _load(args.path)
    prober = _prober(args)
    vec = _parse_vector(args.vector, system)
    pivot = args.pivot - 1 if args.pivot is not None else None
    try:
        report = fix_dae(system, prober=prober, method=args.method,
                         vector=vec, pivot=pivot, max_steps=1,
                         formal=args.mode == "formal")
    except VectorRejected as ex:
        print("vector rejected: %s" % ex, file=sys.stderr)
        if len(vec) == system.n:
            _show_residual(system, [simplify(e) for e in vec],
                           left=args.method == "lc")
        return EXIT_USAGE
    _print_fix(system, report)
    _write_json(args, _conversion_doc(args, system, digest, report))
    _emit(args, report)
    if report.status is FixStatus.ILL_POSED:
        return EXIT_ILL_POSED
    if not report.steps and report.status is not FixStatus.SUCCESS:
        return EXIT_SINGULAR
    return EXIT_UNVERIFIED if report.uncertain else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
