"""Leave-one-day-out comparison of spectral and intensity fingerprints on the synthetic office."""

from common import base_parser, office_data, pipeline, show

from spectraloc.evaluation import cluster_separation, run_leave_one_out


def main() -> None:
    p = base_parser(__doc__)
    p.add_argument("--knn", action="store_true", help="also run the kNN baseline")
    args = p.parse_args()
    _, d = office_data(args)
    print(f"{len(d)} fingerprints, {len(d.spots)} spots, {len(d.groups('day'))} days")
    runs = [("spectral", pipeline(args)), ("intensity", pipeline(args, mode="intensity"))]
    if args.knn:
        runs += [("spectral-knn", pipeline(args, kind="knn")),
                 ("intensity-knn", pipeline(args, kind="knn", mode="intensity"))]
    for name, cfg in runs:
        rep = run_leave_one_out(d, "day", cfg, name=name)
        rep.save(args.out_dir)
        show(name, rep.summary)
        show(name + " (argmax spot)", rep.argmax_summary)
    for feature in ("spectral", "intensity"):
        print(f"centroid separation, {feature}: {cluster_separation(d, feature):.3f}")


if __name__ == "__main__":
    main()
