"""Sensor-count and sub-band sweeps on one held-out day of the synthetic office."""

from common import base_parser, office_data, pipeline

from spectraloc.evaluation import ablate_sensor_count, ablate_subbands


def curve(rep, name):
    for pt in rep.curves[name]:
        print(f"  {pt.x:>4g}  mean p90 {pt.mean:.3f} +- {pt.ci:.3f}  (n={pt.count})")


def main() -> None:
    p = base_parser(__doc__)
    p.add_argument("--holdout", type=int, default=2, help="held-out day")
    p.add_argument("--trials", type=int, default=18, help="masks per sub-band count")
    p.add_argument("--band-sizes", default="1,2,4,8,12,18")
    p.add_argument("--rgb", action="store_true", help="also sweep the per-color policy")
    args = p.parse_args()
    _, d = office_data(args)
    sizes = [int(s) for s in args.band_sizes.split(",")]

    rep = ablate_sensor_count(d, pipeline(args), holdout=args.holdout, cap=20)
    rep.save(args.out_dir, "sensor_count")
    print("sensor count (normalized):")
    curve(rep, "p90_by_sensor_count")
    for row in rep.tables["per_sensor"]:
        print(f"  {row['sensor']:<12} p90 {row['p90']:.3f}")

    # raw readings: min-max scaling of a single band would erase its level
    rep = ablate_subbands(d, pipeline(args, normalized=False), "random", holdout=args.holdout,
                          sizes=sizes, trials=args.trials)
    rep.save(args.out_dir, "subbands_random")
    print("random sub-bands (raw):")
    curve(rep, "p90_by_subbands")
    print(f"  intensity p90 {rep.tables['intensity'][0]['p90']:.3f}")
    if args.rgb:
        rep = ablate_subbands(d, pipeline(args, normalized=False), "rgb", holdout=args.holdout,
                              trials=args.trials, include_intensity=False)
        rep.save(args.out_dir, "subbands_rgb")
        print("per-color sub-bands (raw):")
        curve(rep, "p90_by_subbands")


if __name__ == "__main__":
    main()
