"""``treenet <describe|train|eval|branches|ci|sweep|gradcheck> [flags]``

Every command writes its outputs plus ``manifest.json`` under ``--out``.
``treenet --replay OUT/manifest.json`` re-executes a recorded run.

Exit codes: 0 ok, 2 usage/spec error, 3 data error, 4 numerical divergence,
5 gradient check failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import os
import sys

from . import __version__
from .architecture import (
    PRESETS,
    build_branch_network,
    build_ntn,
    build_tree_at_position,
    count_params,
    describe,
    dumps,
    load_architecture,
    node_sweep_specs,
    preset_spec,
    receptive_field,
    zero_output_weights,
)
from .architecture.builders import POSITIONS
from .architecture.tree import full_tree
from .checkpoint import load_checkpoint, save_checkpoint
from .data import SCALES, build_multiscale_dataset, list_images, load_image, make_pair
from .errors import DataError, SpecError, TreenetError
from .gradcheck import format_report, run_gradcheck
from .metrics import BranchRow, CIInputs, ci_report_csv, compute_ci, parse_ci_csv, published_inputs
from .training import TrainConfig, config_dict, evaluate, train

log = logging.getLogger("treenet")

EXIT_GRADCHECK = 5
DATA_ENV = "TREENET_DATA_DIR"
EVAL_COLUMNS = ("image", "scale", "psnr_model", "psnr_bicubic", "ssim_model", "ssim_bicubic")


# ---------------------------------------------------------------------------
# output helpers


class Run:
    """Collects output files of one command and writes the manifest last."""

    def __init__(self, args, argv):
        self.args = args
        self.argv = list(argv)
        self.out = args.out
        self.outputs = {}
        self.inputs = []
        self.config = {}
        try:
            os.makedirs(self.out, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create output directory {self.out}: {exc}") from exc

    def write(self, name, payload):
        path = os.path.join(self.out, name)
        data = payload.encode("utf-8") if isinstance(payload, str) else payload
        try:
            with open(path, "wb") as fh:
                fh.write(data)
        except OSError as exc:
            raise DataError(f"cannot write {path}: {exc}") from exc
        self.outputs[name] = hashlib.sha256(data).hexdigest()
        return path

    def finish(self):
        manifest = {
            "command": self.args.command,
            "argv": self.argv,
            "version": __version__,
            "seed": getattr(self.args, "seed", None),
            "config": self.config,
            "inputs": self.inputs,
            "outputs": {name: {"path": os.path.join(self.out, name), "sha256": digest}
                        for name, digest in self.outputs.items()},
        }
        path = os.path.join(self.out, "manifest.json")
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2)
            fh.write("\n")
        return manifest


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x, digits=4):
    return f"{x:.{digits}f}"


# ---------------------------------------------------------------------------
# data helpers


def _data_root(args):
    root = args.data or os.environ.get(DATA_ENV)
    if not root:
        raise DataError(f"no data directory: pass --data or set {DATA_ENV}")
    return root


def _subdir(root, name):
    sub = os.path.join(root, name)
    return sub if os.path.isdir(sub) else root


def _load_images(directory, run=None):
    paths = list_images(directory)
    if not paths:
        raise DataError(f"no readable .pgm/.ppm images in {directory}")
    if run is not None:
        run.inputs.extend(paths)
    return [load_image(p) for p in paths], paths


def _scales(text):
    try:
        scales = sorted({int(s) for s in text.split(",") if s.strip()})
    except ValueError:
        raise SpecError(f"--scales must be a comma list drawn from {SCALES}, got {text!r}") from None
    if not scales or any(s not in SCALES for s in scales):
        raise SpecError(f"--scales must be drawn from {SCALES}, got {text!r}")
    return scales


def _train_config(args):
    epochs = args.epochs
    decay = min(args.decay_every, epochs)
    return TrainConfig(
        initial_lr=args.lr,
        lr_decay_factor=args.decay_factor,
        decay_every=decay,
        total_epochs=epochs,
        momentum=args.momentum,
        weight_decay=args.weight_decay,
        batch_size=args.batch,
        grad_clip_norm=args.clip,
        rng_seed=args.seed,
    )


def _training_material(args, run):
    root = _data_root(args)
    train_imgs, _ = _load_images(_subdir(root, "train"), run)
    scales = _scales(args.scales)
    samples = build_multiscale_dataset(train_imgs, scales, augment_flag=not args.no_augment,
                                       seed=args.seed, max_pairs=args.max_patches)
    eval_dir = os.path.join(root, "eval")
    eval_pairs = []
    if os.path.isdir(eval_dir):
        eval_imgs, _ = _load_images(eval_dir, run)
        eval_pairs = [make_pair(img, args.eval_scale) for img in eval_imgs]
    return samples, eval_pairs


def _fit(graph, samples, eval_pairs, cfg, border):
    weights, history = train(graph, samples, cfg, eval_images=eval_pairs or None, border_crop=border)
    return weights, history


# ---------------------------------------------------------------------------
# commands


def cmd_describe(args, run):
    graph = load_architecture(args.arch)
    doc = describe(graph)
    run.write("architecture.json", dumps(doc))
    lines = [
        f"name             {doc['name']}",
        f"param_count      {doc['param_count']}",
        f"receptive_field  {doc['receptive_field']}",
        f"nominal_layers   {doc['nominal_layers']}",
        f"tree_nodes       {doc['tree_nodes']}",
        "layers:",
    ]
    for s in graph.steps:
        if s.kind == "conv":
            slot = graph.weight_slots[s.slot]
            where = f" node {s.node}" if s.node is not None else ""
            lines.append(f"  step {s.id:>3} conv {slot.kernel}x{slot.kernel} d{slot.dilation} "
                         f"{slot.in_channels}->{slot.out_channels} [{s.role}{where}] <- {list(s.inputs)}")
        elif s.kind != "relu":
            lines.append(f"  step {s.id:>3} {s.kind} <- {list(s.inputs)}")
    if doc["branches"]:
        lines.append(_branch_table(doc["branches"]))
    print("\n".join(lines))
    return 0


def _branch_table(branches):
    rows = ["branch  kernel_path            receptive_field  parameters"]
    for b in branches:
        path = "-".join(f"{k}" if d == 1 else f"{k}d{d}" for k, d in b["kernel_path"])
        rows.append(f"{b['branch_index']:>6}  {path:<22} {b['receptive_field']:>15}  {b['param_count']:>10}")
    return "\n".join(rows)


def cmd_train(args, run):
    graph = load_architecture(args.arch)
    cfg = _train_config(args)
    samples, eval_pairs = _training_material(args, run)
    run.config = {"arch": args.arch, "train": config_dict(cfg), "scales": _scales(args.scales),
                  "samples": len(samples), "augment": not args.no_augment}
    weights, history = _fit(graph, samples, eval_pairs, cfg, args.eval_scale)
    save_path = os.path.join(run.out, "checkpoint.tnck")
    save_checkpoint(save_path, graph, weights, {"config": config_dict(cfg), "snapshot_id": history.snapshot_id})
    with open(save_path, "rb") as fh:
        run.outputs["checkpoint.tnck"] = hashlib.sha256(fh.read()).hexdigest()
    run.write("history.csv", history.to_csv())
    last = history.records[-1]
    print(f"trained {graph.name} on {len(samples)} pairs: final loss {last.loss:.6g}"
          + ("" if last.psnr is None else f", eval psnr {last.psnr:.3f} dB"))
    return 0


def cmd_eval(args, run):
    if not os.path.exists(args.checkpoint):
        raise DataError(f"checkpoint {args.checkpoint} does not exist")
    graph, weights, _ = load_checkpoint(args.checkpoint)
    run.inputs.append(args.checkpoint)
    eval_dir = args.eval_dir or _subdir(_data_root(args), "eval")
    imgs, paths = _load_images(eval_dir, run)
    border = args.scale if args.border is None else args.border
    identity = zero_output_weights(graph, weights)
    rows, pm, pb, sm, sb = [], [], [], [], []
    for img, path in zip(imgs, paths):
        pair = [make_pair(img, args.scale)]
        p_model, s_model = evaluate(graph, weights, pair, border)
        p_bic, s_bic = evaluate(graph, identity, pair, border)
        rows.append([os.path.basename(path), args.scale, _fmt(p_model), _fmt(p_bic), _fmt(s_model), _fmt(s_bic)])
        pm.append(p_model), pb.append(p_bic), sm.append(s_model), sb.append(s_bic)
    n = len(rows)
    rows.append(["mean", args.scale, _fmt(sum(pm) / n), _fmt(sum(pb) / n), _fmt(sum(sm) / n), _fmt(sum(sb) / n)])
    text = _csv(EVAL_COLUMNS, rows)
    run.config = {"checkpoint": args.checkpoint, "scale": args.scale, "border_crop": border}
    run.write("eval.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_branches(args, run):
    spec = _tree_spec_for(args.arch)
    whole = build_ntn(spec)
    rows = []
    for b in whole.branches:
        path = "-".join(f"{k}" if d == 1 else f"{k}d{d}" for k, d in b.kernel_path)
        rows.append([b.branch_index, path, b.receptive_field, b.param_count])
    text = _csv(("branch", "kernel_path", "receptive_field", "parameters"), rows)
    run.write("branches.csv", text)
    sys.stdout.write(text)
    if args.data:
        cfg = _train_config(args)
        samples, eval_pairs = _training_material(args, run)
        if not eval_pairs:
            raise DataError("measuring branch PSNR needs an eval/ directory under --data")
        run.config = {"arch": args.arch, "train": config_dict(cfg), "samples": len(samples)}

        def measured(graph):
            weights, _ = _fit(graph, samples, [], cfg, args.eval_scale)
            return evaluate(graph, weights, eval_pairs, args.eval_scale)[0]

        whole_row = BranchRow(measured(whole), receptive_field(whole), count_params(whole))
        branch_rows = [
            BranchRow(measured(build_branch_network(spec, b.branch_index)), b.receptive_field, b.param_count)
            for b in whole.branches
        ]
        inputs = CIInputs(tuple(branch_rows), whole_row, args.lam)
        report = ci_report_csv(inputs, whole_label=spec.name or "whole")
        run.write("ci.csv", report)
        sys.stdout.write(report)
    return 0


def _tree_spec_for(arch):
    if arch in PRESETS:
        if not arch.startswith("ntn"):
            raise SpecError(f"branch analysis needs an ordinary tree preset (ntn_*), got {arch!r}")
        return preset_spec(arch)
    raise SpecError(f"branch analysis needs an ntn_* preset, got {arch!r}")


def _triple(text, flag):
    try:
        p, r, q = (float(v) for v in text.split(","))
    except ValueError:
        raise SpecError(f"{flag} expects PSNR,RECEPTIVE_FIELD,PARAMETERS, got {text!r}") from None
    return BranchRow(p, r, q)


def cmd_ci(args, run):
    if args.from_table2_fixture:
        inputs = published_inputs(args.lam)
        label = "ntn_32"
    elif args.csv:
        with open(args.csv, encoding="utf-8") as fh:
            inputs = parse_ci_csv(fh.read(), args.lam)
        run.inputs.append(args.csv)
        label = "whole"
    else:
        if not args.whole or not args.branch:
            raise SpecError("ci needs --from-table2-fixture, --csv FILE, or --whole and at least one --branch")
        inputs = CIInputs(tuple(_triple(b, "--branch") for b in args.branch), _triple(args.whole, "--whole"), args.lam)
        label = "whole"
    results = compute_ci(inputs)
    text = ci_report_csv(inputs, results, whole_label=label)
    run.config = {"lambda": args.lam}
    run.write("ci.csv", text)
    sys.stdout.write(text)
    return 0


def sweep_variants(kind):
    if kind == "nodes":
        return [(f"nodes{len(s.nodes)}", build_ntn(s)) for s in node_sweep_specs()]
    if kind == "position":
        spec = full_tree(3, name="ntn")
        return [(pos, build_tree_at_position(pos, spec)) for pos in POSITIONS]
    raise SpecError(f"sweep kind must be 'nodes' or 'position', got {kind!r}")


def cmd_sweep(args, run):
    variants = sweep_variants(args.kind)
    cfg = _train_config(args)
    samples, eval_pairs = _training_material(args, run)
    run.config = {"kind": args.kind, "train": config_dict(cfg), "samples": len(samples)}
    rows = []
    for name, graph in variants:
        weights, history = _fit(graph, samples, [], cfg, args.eval_scale)
        psnr_val = evaluate(graph, weights, eval_pairs, args.eval_scale)[0] if eval_pairs else None
        rows.append([name, count_params(graph), "" if psnr_val is None else _fmt(psnr_val),
                     repr(history.records[-1].loss)])
        log.info("sweep %s: %s", name, rows[-1])
    text = _csv(("variant", "params", "psnr", "final_loss"), rows)
    run.write(f"sweep_{args.kind}.csv", text)
    sys.stdout.write(text)
    return 0


def cmd_gradcheck(args, run):
    results = run_gradcheck(instances=args.instances, seed=args.seed)
    report = format_report(results)
    run.write("gradcheck.txt", report + "\n")
    print(report)
    return 0 if all(r.passed for r in results) else EXIT_GRADCHECK


# ---------------------------------------------------------------------------
# argument parsing


def _add_train_flags(p):
    p.add_argument("--data", help=f"corpus root with train/ and eval/ (default ${DATA_ENV})")
    p.add_argument("--epochs", type=int, default=80)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--decay-factor", type=float, default=10.0)
    p.add_argument("--decay-every", type=int, default=20)
    p.add_argument("--momentum", type=float, default=0.9)
    p.add_argument("--weight-decay", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--clip", type=float, default=1.0, help="global gradient-norm clip")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scales", default="2,3,4", help="comma list of training scales")
    p.add_argument("--no-augment", action="store_true", help="skip the 8 rotations/flips")
    p.add_argument("--max-patches", type=int, default=None, help="seeded subset of the patch pairs")
    p.add_argument("--eval-scale", type=int, default=3, help="scale (and border crop) for eval/ images")


def build_parser():
    parser = argparse.ArgumentParser(prog="treenet", description="Tree-structured CNNs for super-resolution")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--replay", metavar="MANIFEST", help="re-run the command recorded in a manifest")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--out", default=os.path.join("treenet_out", name), help="output directory")
        return p

    p = command("describe", "parameter count, receptive field, branch table and layer listing")
    p.add_argument("arch", help=f"one of {', '.join(PRESETS)} or a spec/architecture JSON file")

    p = command("train", "train a model on a corpus of .pgm/.ppm images")
    p.add_argument("arch")
    _add_train_flags(p)

    p = command("eval", "PSNR/SSIM of a checkpoint against the bicubic baseline")
    p.add_argument("checkpoint")
    p.add_argument("--eval-dir", help="directory of HR images (default DATA/eval)")
    p.add_argument("--data", help=f"corpus root (default ${DATA_ENV})")
    p.add_argument("--scale", type=int, default=3, choices=SCALES)
    p.add_argument("--border", type=int, default=None, help="border crop (default: scale)")

    p = command("branches", "branch table; with --data also measured PSNR and CI")
    p.add_argument("arch")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    _add_train_flags(p)

    p = command("ci", "contribution index table from branch PSNRs")
    p.add_argument("--from-table2-fixture", action="store_true", help="use the published branch table")
    p.add_argument("--csv", help="CSV with branch, psnr, receptive_field, parameters columns")
    p.add_argument("--whole", help="PSNR,RF,PARAMS of the whole network")
    p.add_argument("--branch", action="append", help="PSNR,RF,PARAMS of one branch (repeatable)")
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)

    p = command("sweep", "train the node-count or tree-position family")
    p.add_argument("kind", choices=("nodes", "position"))
    _add_train_flags(p)

    p = command("gradcheck", "finite-difference checks of every differentiable op")
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    return parser


COMMANDS = {
    "describe": cmd_describe,
    "train": cmd_train,
    "eval": cmd_eval,
    "branches": cmd_branches,
    "ci": cmd_ci,
    "sweep": cmd_sweep,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.replay:
        try:
            with open(args.replay, encoding="utf-8") as fh:
                argv = json.load(fh)["argv"]
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            print(f"treenet: cannot replay {args.replay}: {exc}", file=sys.stderr)
            return DataError.exit_code
        args = parser.parse_args(argv)
    if not args.command:
        parser.print_usage(sys.stderr)
        return 2
    try:
        run = Run(args, argv)
        code = COMMANDS[args.command](args, run)
        run.finish()
        return code
    except TreenetError as exc:
        print(f"treenet {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
