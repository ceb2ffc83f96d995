"""Train under normal lighting, test under failed tubes, an extra lamp, or global dimming."""

from common import base_parser, office_data, pipeline

from spectraloc.evaluation import stress_test


def main() -> None:
    p = base_parser(__doc__)
    p.add_argument("--failed", default="4,10,16,28,34,40", help="indices of dead tubes")
    p.add_argument("--dim", type=float, default=0.5)
    args = p.parse_args()
    failed = tuple(int(i) for i in args.failed.split(","))
    _, train = office_data(args)
    test_args = p.parse_args()
    test_args.seed, test_args.days = args.seed + 1000, 1
    cases = {
        "dimmed": office_data(test_args)[1].scaled(args.dim),
        "lighting-failure": office_data(test_args, failed_lights=failed)[1],
        "interference": office_data(test_args, extra_lamp=True)[1],
    }
    cfg = pipeline(args)
    print(f"{'test condition':<18} {'raw median':>10} {'raw p90':>8} {'norm median':>12} {'norm p90':>9}")
    for name, test in cases.items():
        rep = stress_test(train, test, cfg, name=name)
        rep.save(args.out_dir)
        raw, norm = rep.variants["raw"], rep.variants["normalized"]
        print(f"{name:<18} {raw['median']:>10.3f} {raw['p90']:>8.3f} {norm['median']:>12.3f} {norm['p90']:>9.3f}")


if __name__ == "__main__":
    main()
