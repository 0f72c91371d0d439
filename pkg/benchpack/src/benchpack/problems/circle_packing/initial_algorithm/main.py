"""Entry point: pack every required circle count and emit solutions.json."""

import json

from packer import pack_circles

SEED = 0


def main():
    records = []
    for n in range(26, 33):
        centers, radii = pack_circles(n, seed=SEED + n)
        records.append({"n": n, "centers": centers.tolist(),
                        "radii": radii.tolist()})
        print(f"n={n}: sum of radii {float(radii.sum()):.4f}")
    with open("solutions.json", "w") as handle:
        json.dump(records, handle)


if __name__ == "__main__":
    main()
