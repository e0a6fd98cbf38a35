"""Command line interface: ``wirefaces <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .brep import load_drawing


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    p.add_argument("--out", required=True, help="output path")
    return p


def _truth_for(drawing_path: Path, explicit: str | None):
    path = Path(explicit) if explicit else drawing_path.with_name(drawing_path.stem + ".truth.json")
    if path.exists():
        return json.loads(path.read_text())
    if explicit:
        raise FileNotFoundError(path)
    return None


def _write_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=1) + "\n")


# -- commands ------------------------------------------------------------------------

def cmd_generate(a) -> None:
    from .synth import FAMILIES, FULL_SPLIT, write_corpus

    families = a.families.split(",") if a.families else list(FAMILIES)
    unknown = set(families) - set(FAMILIES)
    if unknown:
        raise SystemExit(f"unknown families: {sorted(unknown)}")
    split = [float(x) for x in a.split.split(",")] if a.split else list(FULL_SPLIT)
    m = write_corpus(a.out, families, a.count, a.seed, split)
    print(f"wrote {len(m['shapes'])} shapes to {a.out}")


def cmd_render_svg(a) -> None:
    from .experiment import truth_mesh
    from .svg import render_svg

    path = Path(a.input)
    d = load_drawing(path)
    truth = None if a.no_hidden else _truth_for(path, a.truth)
    if truth is not None and d.faces is not None:
        mesh = truth_mesh(d, truth, canonical=False)
        Path(a.out).write_text(render_svg(d, truth["sample_depths"], mesh))
    else:
        Path(a.out).write_text(render_svg(d))


def cmd_train(a) -> None:
    from .model import ModelConfig, TrainConfig, save_checkpoint, train
    from .synth import load_corpus

    drawings = [d for _, d, _ in load_corpus(a.data, a.split)]
    if not drawings:
        raise SystemExit(f"no drawings in split {a.split!r} of {a.data}")
    cfg = ModelConfig.preset(a.preset)
    overrides = {"seed": a.seed}
    if a.iters is not None:
        overrides["steps"] = a.iters
    if a.lr is not None:
        overrides["lr"] = a.lr
    tc = TrainConfig.preset(a.preset, **overrides)
    result = train(drawings, cfg, tc, log_every=a.log_every)
    save_checkpoint(a.out, result.params, cfg, a.seed, len(result.history),
                    {"train": {"lr": tc.lr, "steps": tc.steps, "drawings": len(drawings),
                               "final_loss": result.final_loss}})
    log_path = Path(a.out).with_suffix(".log.json")
    _write_json({"history": result.history}, log_path)
    print(f"trained {len(result.history)} steps, final loss {result.final_loss:.6f}")


def cmd_predict(a) -> None:
    from .model import load_checkpoint, predict_faces
    from .postprocess import raw_dict

    params, cfg, _ = load_checkpoint(a.checkpoint)
    d = load_drawing(a.input)
    _write_json(raw_dict(predict_faces(d, params, cfg)), a.out)


def cmd_postprocess(a) -> None:
    from .postprocess import load_raw, postprocess, prediction_dict

    d = load_drawing(a.input)
    _write_json(prediction_dict(postprocess(d, load_raw(a.raw))), a.out)


def cmd_baseline(a) -> None:
    from .baseline import run_baseline
    from .postprocess import prediction_dict

    d = load_drawing(a.input)
    _write_json(prediction_dict(run_baseline(d, exclusive=not a.independent)), a.out)


def cmd_reconstruct(a) -> None:
    from .mesh import assemble_mesh, write_obj
    from .postprocess import load_predictions
    from .reconstruct import reconstruct

    d = load_drawing(a.input)
    faces = load_predictions(a.faces)
    if a.directions == "from-file":
        directions = d.directions
    else:
        directions = np.array(json.loads(Path(a.directions).read_text()), dtype=float)
    r = reconstruct(d, faces, directions, epsilon=a.epsilon)
    mesh = assemble_mesh(r.solid, d)
    write_obj(mesh, a.out)
    side = r.sidecar()
    side["mesh"] = {"vertices": len(mesh.vertices), "triangles": len(mesh.triangles),
                    "skipped_faces": list(mesh.skipped)}
    _write_json(side, Path(a.out).with_suffix(".json"))


def cmd_evaluate(a) -> None:
    from .experiment import chamfer_histogram_svg, run_experiment

    report, timing = run_experiment(a.data, a.method, a.checkpoint, a.split or None, a.seed, a.jobs,
                                    a.chamfer_samples, not a.no_reconstruction, a.limit)
    _write_json(report, a.out)
    _write_json(timing, Path(a.out).with_suffix(".timing.json"))
    if a.histogram and "chamfer" in report["aggregate"]:
        Path(a.histogram).write_text(chamfer_histogram_svg([s["chamfer"] for s in report["shapes"]]))
    agg = report["aggregate"]
    print(f"precision {agg['precision']:.4f} recall {agg['recall']:.4f} over {agg['shapes']} shapes")


def cmd_export_obj(a) -> None:
    from .experiment import truth_mesh
    from .mesh import write_obj

    path = Path(a.input)
    d = load_drawing(path)
    truth = _truth_for(path, a.truth)
    if truth is None or d.faces is None:
        raise SystemExit("export-obj needs a drawing with faces and its truth file")
    write_obj(truth_mesh(d, truth), a.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wirefaces", description="Face identification and 3D lifting "
                                "for 2D wireframe drawings.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    c = _common()

    s = sub.add_parser("generate", parents=[c], help="write a synthetic corpus")
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--families", default=None, help="comma-separated subset of box,hole,lprism,cylinder,boxbox")
    s.add_argument("--split", default=None, help="train,val,test fractions or counts")
    s.set_defaults(func=cmd_generate)

    s = sub.add_parser("render-svg", parents=[c], help="draw a drawing as SVG")
    s.add_argument("input")
    s.add_argument("--truth", default=None, help="truth file (defaults to <name>.truth.json)")
    s.add_argument("--no-hidden", action="store_true", help="draw every line solid")
    s.set_defaults(func=cmd_render_svg)

    s = sub.add_parser("train", parents=[c], help="train the pointer model")
    s.add_argument("--data", required=True)
    s.add_argument("--preset", choices=("desk", "full"), default="desk")
    s.add_argument("--iters", type=int, default=None)
    s.add_argument("--lr", type=float, default=None)
    s.add_argument("--split", default="train")
    s.add_argument("--log-every", type=int, default=100)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("predict", parents=[c], help="raw per-co-edge predictions")
    s.add_argument("checkpoint")
    s.add_argument("input")
    s.set_defaults(func=cmd_predict)

    s = sub.add_parser("postprocess", parents=[c], help="filter, deduplicate and vote raw predictions")
    s.add_argument("input")
    s.add_argument("raw")
    s.set_defaults(func=cmd_postprocess)

    s = sub.add_parser("baseline", parents=[c], help="least-cost loop faces")
    s.add_argument("input")
    s.add_argument("--independent", action="store_true", help="search every co-edge independently")
    s.set_defaults(func=cmd_baseline)

    s = sub.add_parser("reconstruct", parents=[c], help="lift faces to 3D and write OBJ plus JSON")
    s.add_argument("input")
    s.add_argument("faces")
    s.add_argument("--directions", default="from-file",
                   help="'from-file' or a JSON file with three direction rows")
    s.add_argument("--epsilon", type=float, default=0.1)
    s.set_defaults(func=cmd_reconstruct)

    s = sub.add_parser("evaluate", parents=[c], help="score a method on a corpus split")
    s.add_argument("--data", required=True)
    s.add_argument("--method", choices=("neural", "baseline", "truth"), required=True)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--split", default="test", help="split name, or empty for all shapes")
    s.add_argument("--chamfer-samples", type=int, default=1000)
    s.add_argument("--no-reconstruction", action="store_true")
    s.add_argument("--histogram", default=None, help="optional SVG histogram of Chamfer distances")
    s.add_argument("--limit", type=int, default=None)
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("export-obj", parents=[c], help="ground-truth solid as OBJ")
    s.add_argument("input")
    s.add_argument("--truth", default=None)
    s.set_defaults(func=cmd_export_obj)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
