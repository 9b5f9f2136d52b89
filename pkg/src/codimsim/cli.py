"""Command-line driver: simulate, check and ccd-bench."""

import argparse
import json
import sys

from .scene import SceneError, ccd_bench, feasibility_audit, load_scene, run


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="codimsim",
        description="Contact-safe mixed-codimension implicit simulation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="step a scene and write frames")
    p_sim.add_argument("scene")
    p_sim.add_argument("--frames", type=int, default=None)
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--deterministic", action="store_true",
                       help="accepted for compatibility; runs are always "
                            "deterministic")
    p_sim.add_argument("--quiet", action="store_true")

    p_chk = sub.add_parser("check", help="load a scene and audit feasibility")
    p_chk.add_argument("scene")

    p_ccd = sub.add_parser("ccd-bench", help="replay a CCD query corpus")
    p_ccd.add_argument("corpus")
    p_ccd.add_argument("--samples", type=int, default=10_000)
    p_ccd.add_argument("--json", action="store_true", help="emit full JSON")

    args = parser.parse_args(argv)

    if args.command == "simulate":
        try:
            scene = load_scene(args.scene)
        except SceneError as exc:
            print(f"scene invalid ({exc.kind}): {exc}", file=sys.stderr)
            return 2
        code, _ = run(scene, frames=args.frames, out_dir=args.out,
                      progress=not args.quiet)
        if code != 0:
            print("step failed to converge (abort policy)", file=sys.stderr)
        return code

    if args.command == "check":
        try:
            scene = load_scene(args.scene)
        except SceneError as exc:
            print(f"scene invalid ({exc.kind}): {exc}", file=sys.stderr)
            return 2
        ok, report = feasibility_audit(scene.system, scene.world.x)
        print(f"scene ok: {report}")
        return 0

    if args.command == "ccd-bench":
        try:
            report = ccd_bench(args.corpus, nsamples=args.samples)
        except (OSError, ValueError) as exc:
            print(f"corpus error: {exc}", file=sys.stderr)
            return 2
        if args.json:
            print(json.dumps(report, indent=2))
        else:
            summary = {k: v for k, v in report.items() if k != "results"}
            print(json.dumps(summary, indent=2))
        return 0 if report["mismatches"] == 0 else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
