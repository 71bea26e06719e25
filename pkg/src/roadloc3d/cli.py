"""Command-line frontend for batch use of the library.

Exit codes: 0 on success, 1 on validation/usage errors, 2 on I/O errors.
Every subcommand is deterministic for a fixed ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import calib, dataio, losses, metrics, targets
from .box3d import gt_vertices
from .errors import ParseError, RoadLoc3DError


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _write_output(payload: dict, out: str | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_scene_arg(path: str) -> dataio.SceneMeta:
    return dataio.load_scene(path)


def cmd_calibrate(args) -> int:
    doc = json.loads(Path(args.marks).read_text())
    vp = calib.VanishingPoint(*doc["vp"])
    marks = [
        calib.GroundMark(
            endpoints=tuple(tuple(p) for p in m["endpoints"]),
            world_length=float(m["world_length"]),
            kind=m["kind"],
        )
        for m in doc["marks"]
    ]
    width = int(args.image_width or doc.get("image_width", 0))
    height = int(args.image_height or doc.get("image_height", 0))
    if not (width > 0 and height > 0):
        raise ParseError("image size is required (flags or marks file)", path=args.marks)
    d_ry = args.d_ry if args.d_ry is not None else doc.get("D_ry")
    d_rx = args.d_rx if args.d_rx is not None else doc.get("D_rx")
    if d_ry is None or d_rx is None:
        raise ParseError("scene extents D_ry/D_rx are required", path=args.marks)
    solution = calib.solve_vwl(vp, marks, (width, height))
    scene = dataio.SceneMeta(
        scene_id=args.scene or doc.get("scene", "calibrated"),
        calib=solution.params,
        extent=metrics.SceneExtent(float(d_ry), float(d_rx)),
        image_size=(width, height),
    )
    dataio.save_scene(args.out, scene)
    _write_output(
        {
            "f": solution.params.f,
            "phi": solution.params.phi,
            "theta": solution.params.theta,
            "h": solution.params.h,
            "residual": solution.residual,
            "out": str(args.out),
        },
        None,
    )
    return 0


def cmd_project(args) -> int:
    scene = _load_scene_arg(args.scene)
    proj = calib.build_projection(scene.calib)
    pts = np.asarray(json.loads(Path(args.infile).read_text())["points"], float)
    uv = calib.world_to_image(proj, pts)
    _write_output({"points_image": np.atleast_2d(uv).tolist()}, args.out)
    return 0


def cmd_backproject(args) -> int:
    scene = _load_scene_arg(args.scene)
    proj = calib.build_projection(scene.calib)
    pts = np.asarray(json.loads(Path(args.infile).read_text())["points"], float)
    xyz = calib.image_to_world(proj, pts, z=args.z)
    _write_output({"points_world": np.atleast_2d(xyz).tolist()}, args.out)
    return 0


def _grid_config(scene: dataio.SceneMeta, args) -> targets.GridConfig:
    return targets.GridConfig(
        input_width=args.input_size, input_height=args.input_size, stride=args.stride
    )


def cmd_encode(args) -> int:
    scene = _load_scene_arg(args.scene)
    grid = _grid_config(scene, args)
    out_dir = Path(args.out_dir)
    for frame_path in sorted(Path(p) for p in args.frames):
        frame = dataio.load_annotations(frame_path)
        scaled = dataio.rescale_annotations(
            frame.objects, scene.image_size, (grid.input_width, grid.input_height)
        )
        maps = targets.encode(scaled, grid)
        targets.save_target_maps(out_dir, frame_path.stem, maps)
    print(f"encoded {len(args.frames)} frame(s) -> {out_dir}")
    return 0


def cmd_decode(args) -> int:
    scene = _load_scene_arg(args.scene)
    maps = targets.load_target_maps(Path(args.grids_dir), args.stem)
    dets = targets.decode(maps, max_objects=args.max_objects, threshold=args.threshold)
    input_size = maps.mc.shape[1] * maps.stride, maps.mc.shape[0] * maps.stride
    dets = dataio.rescale_detections(dets, input_size, scene.image_size)
    dataio.save_detections(args.out, scene.scene_id, args.stem, dets)
    print(f"decoded {len(dets)} detection(s) -> {args.out}")
    return 0


def cmd_fuse(args) -> int:
    weights = (
        targets.FusionWeights(tuple(args.weights))
        if args.weights
        else targets.DEFAULT_FUSION_WEIGHTS
    )
    grids = []
    stride = 4
    for path in args.grids:
        arr, stride = targets.load_grid(path)
        grids.append(arr)
    fused = targets.weighted_fuse(grids, weights)
    targets.save_grid(Path(args.out), fused, stride)
    print(f"fused {len(grids)} maps -> {args.out}")
    return 0


def cmd_loss_eval(args) -> int:
    scene = _load_scene_arg(args.scene)
    grid = _grid_config(scene, args)
    frame = dataio.load_annotations(args.gt)
    scaled = dataio.rescale_annotations(
        frame.objects, scene.image_size, (grid.input_width, grid.input_height)
    )
    gt_maps = targets.encode(scaled, grid)
    pred = targets.load_target_maps(Path(args.pred_dir), args.stem)
    mask = gt_maps.peak_mask()

    # The reprojection term compares pixels in the encode frame, so the
    # calibration is composed with the native -> input rescale.
    proj = calib.transform_projection(
        calib.scale_matrix(scene.image_size, (grid.input_width, grid.input_height)),
        calib.build_projection(scene.calib),
    )
    anchors = np.zeros((grid.grid_height, grid.grid_width, 3))
    for ann, scaled_ann in zip(frame.objects, scaled):
        u, v = scaled_ann.centroid_image
        cell = (int(v) // grid.stride, int(u) // grid.stride)
        box = dataio.annotation_to_world_box(ann, scene)
        anchors[cell] = gt_vertices(box).points[1]

    weights = losses.LossWeights(
        lambda_c=args.lambda_c,
        lambda_co=args.lambda_co,
        lambda_v=args.lambda_v,
        lambda_s=args.lambda_s,
        lambda_proj=args.lambda_proj,
        lambda_iou=args.lambda_iou,
    )
    pred_mv_px = pred.mv * pred.stride
    gt_mv_px = gt_maps.mv * gt_maps.stride
    components = {
        "classification": losses.focal_loss(pred.mc, gt_maps.mc),
        "offset": losses.offset_loss(pred.mco, gt_maps.mco, mask),
        "vertex": losses.vertex_loss(pred.mv, gt_maps.mv, mask),
        "dimension": losses.dim_loss(pred.ms, gt_maps.ms, mask),
        "reprojection": losses.reprojection_loss(
            proj, pred.ms, pred_mv_px, anchors, mask
        ),
        "iou": losses.iou_constraint_loss(pred_mv_px, gt_mv_px, mask),
    }
    total = losses.total_loss(list(components.values()), weights)
    _write_output({"components": components, "total": total}, args.out)
    return 0


def cmd_eval(args) -> int:
    from .targets import localize

    scenes_dir = Path(args.scenes_dir)
    frame_paths = dataio.read_manifest(args.manifest)
    frames = []
    extent = None
    t0 = time.perf_counter()
    for path in sorted(frame_paths):
        frame = dataio.load_annotations(path)
        scene = dataio.load_scene(scenes_dir / f"{frame.scene_id}.json")
        extent = scene.extent
        proj = calib.build_projection(scene.calib)
        gts = [dataio.annotation_to_world_box(a, scene) for a in frame.objects]
        dets = []
        pred_path = Path(args.pred_dir) / path.name
        if pred_path.exists():
            for det in dataio.load_detections(pred_path):
                dets.append((det.confidence, localize(det, proj)))
        frames.append(metrics.FrameResult(dets, gts, extent=scene.extent))
    if extent is None:
        raise ParseError("manifest lists no frames", path=args.manifest)
    elapsed = time.perf_counter() - t0
    report = metrics.evaluate_frames(
        frames,
        extent,
        thresholds=args.iou or (0.5, 0.7),
        bin_width=args.bin_width,
        frame_time=elapsed / max(len(frames), 1),
    )
    if args.out:
        report.save_json(args.out)
        print(f"report -> {args.out}")
    else:
        _write_output(report.to_dict(), None)
    if args.csv:
        report.save_curve_csv(args.csv)
        print(f"error-vs-distance curve -> {args.csv}")
    return 0


def cmd_synth(args) -> int:
    scene_meta = _load_scene_arg(args.scene)
    rng = np.random.default_rng(args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(args.frames):
        _, annotations = dataio.synth_scene(
            scene_meta.calib,
            scene_meta.extent,
            args.n,
            rng,
            image_size=scene_meta.image_size,
            scene_id=scene_meta.scene_id,
        )
        frame = dataio.FrameAnnotations(
            scene_id=scene_meta.scene_id,
            frame_id=f"{k:06d}",
            objects=tuple(annotations),
        )
        path = out_dir / f"{frame.frame_id}.json"
        dataio.save_annotations(path, frame)
        paths.append(path)
    dataio.write_manifest(out_dir / "manifest.txt", paths)
    print(f"wrote {len(paths)} frame(s) + manifest -> {out_dir}")
    return 0


def cmd_augment(args) -> int:
    rng = np.random.default_rng(args.seed)
    spec = dataio.AugmentSpec(
        brightness=args.brightness,
        contrast=args.contrast,
        saturation=args.saturation,
        perspective_px=args.perspective,
    )
    scenes_dir = Path(args.scenes_dir)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_paths = []
    for path in dataio.read_manifest(args.manifest):
        frame = dataio.load_annotations(path)
        scene = dataio.load_scene(scenes_dir / f"{frame.scene_id}.json")
        width = scene.image_size[0]
        variants: list[tuple[str, tuple]] = [("orig", frame.objects)]
        hf = tuple(dataio.hflip(width, frame.objects))
        warp = dataio.random_perspective(scene.image_size, spec.perspective_px, rng)
        pt = tuple(dataio.perspective_warp(frame.objects, warp))
        # Color jitter does not move annotations; the variant exists so the
        # emitted manifest still pairs one annotation file per image.
        variants += [("cj", frame.objects), ("hf", hf), ("pt", pt)]
        if args.combos:
            hf_pt = tuple(dataio.perspective_warp(hf, warp))
            variants += [
                ("cj-hf", hf),
                ("cj-pt", pt),
                ("hf-pt", hf_pt),
                ("cj-hf-pt", hf_pt),
            ]
        for suffix, objects in variants:
            out_frame = dataio.FrameAnnotations(
                scene_id=frame.scene_id,
                frame_id=f"{frame.frame_id}-{suffix}",
                objects=tuple(objects),
            )
            out_path = out_dir / f"{out_frame.frame_id}.json"
            dataio.save_annotations(out_path, out_frame)
            out_paths.append(out_path)
    dataio.write_manifest(out_dir / "manifest.txt", sorted(out_paths))
    print(f"wrote {len(out_paths)} frame(s) + manifest -> {out_dir}")
    return 0


def cmd_serve(args) -> int:
    from .service import ServiceConfig, load_config, run_service

    if args.config:
        config = load_config(args.config)
    else:
        if not (args.scenes_dir and args.data_dir):
            print("error: serve needs --config or both --scenes-dir and --data-dir",
                  file=sys.stderr)
            return 1
        config = ServiceConfig(
            scenes_dir=Path(args.scenes_dir), data_dir=Path(args.data_dir)
        )
    if args.port:
        config.port = args.port
    run_service(config)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="roadloc3d")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="solve camera parameters from a marks file")
    p.add_argument("--marks", required=True, help="JSON file with vp + ground marks")
    p.add_argument("--image-width", type=int)
    p.add_argument("--image-height", type=int)
    p.add_argument("--d-ry", type=float, help="along-road extent in meters")
    p.add_argument("--d-rx", type=float, help="across-road extent in meters")
    p.add_argument("--scene", help="scene id for the output file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("project", help="world points -> image points")
    p.add_argument("--scene", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("backproject", help="image points -> world points at height z")
    p.add_argument("--scene", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--z", type=float, default=0.0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_backproject)

    p = sub.add_parser("encode", help="annotation frames -> target grids")
    p.add_argument("--scene", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--input-size", type=int, default=512)
    p.add_argument("frames", nargs="+")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="prediction grids -> detections file")
    p.add_argument("--scene", required=True)
    p.add_argument("--grids-dir", required=True)
    p.add_argument("--stem", required=True)
    p.add_argument("--threshold", type=float, default=0.3)
    p.add_argument("--max-objects", type=int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("fuse", help="weighted fusion of five equal-shape grids")
    p.add_argument("--weights", type=float, nargs=5, metavar="W")
    p.add_argument("--out", required=True)
    p.add_argument("grids", nargs=5)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("loss-eval", help="per-term losses of prediction grids vs ground truth")
    p.add_argument("--scene", required=True)
    p.add_argument("--gt", required=True, help="ground-truth annotation frame")
    p.add_argument("--pred-dir", required=True, help="directory with prediction grids")
    p.add_argument("--stem", required=True)
    p.add_argument("--stride", type=int, default=4)
    p.add_argument("--input-size", type=int, default=512)
    for name, default in (
        ("--lambda.c", 1.0),
        ("--lambda.co", 1.0),
        ("--lambda.v", 0.1),
        ("--lambda.s", 0.1),
        ("--lambda.proj", 0.1),
        ("--lambda.iou", 1.0),
    ):
        p.add_argument(name, dest=name[2:].replace(".", "_"), type=float, default=default)
    p.add_argument("--out")
    p.set_defaults(func=cmd_loss_eval)

    p = sub.add_parser("eval", help="manifest + predictions -> evaluation report")
    p.add_argument("--manifest", required=True)
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--scenes-dir", required=True)
    p.add_argument("--iou", type=float, action="append", default=None)
    p.add_argument("--bin-width", type=float, default=10.0)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic ground-truth frames")
    p.add_argument("--scene", required=True)
    p.add_argument("--n", type=int, required=True, help="vehicles per frame")
    p.add_argument("--frames", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("augment", help="expand a dataset with the three augmentations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--scenes-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--brightness", type=float, default=0.2)
    p.add_argument("--contrast", type=float, default=0.2)
    p.add_argument("--saturation", type=float, default=0.2)
    p.add_argument("--perspective", type=float, default=40.0)
    p.add_argument(
        "--combos",
        action="store_true",
        help="emit all eight transform combinations instead of the x4 default",
    )
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("serve", help="start the annotation HTTP service")
    p.add_argument("--config", help="TOML or JSON config with port/scenes_dir/data_dir")
    p.add_argument("--scenes-dir")
    p.add_argument("--data-dir")
    p.add_argument("--port", type=int)
    p.set_defaults(func=cmd_serve)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except RoadLoc3DError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: invalid JSON: {exc}", file=sys.stderr)
        return 1


def main() -> None:  # pragma: no cover - console entry point
    sys.exit(run())


if __name__ == "__main__":
    main()
