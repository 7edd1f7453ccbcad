"""Regenerate the bundled synthetic stand-in corpus.

The package cannot ship the UCI ``parkinsons.data`` file, so it bundles a
fully synthetic replica with the same shape: 195 recordings of 31 subjects
(8 healthy = 48 rows, 23 patients = 147 rows, six-or-seven takes each),
the same 24 columns under the original UCI headers, and feature marginals,
family correlations and class separation calibrated to the published
summary statistics of the real corpus.

Construction: each subject carries a latent severity (patients shifted up)
and a latent pitch level; each recording adds seeded noise.  Perturbation
features are log-linear in severity with shared per-recording factors, so
the jitter family, the shimmer family, and (spread1, ppe) come out strongly
intercorrelated, and ``Jitter:DDP = 3 * MDVP:RAP`` / ``Shimmer:DDA = 3 *
Shimmer:APQ3`` hold exactly as they do in the real data.

Run from the repo root:  python tools/make_replica.py
"""

import os

import numpy as np

SEED = 20230913
OUT = os.path.join(os.path.dirname(__file__), "..", "src", "voxsynth", "data",
                   "parkinsons_replica.csv")

HEADER = (
    "name,MDVP:Fo(Hz),MDVP:Fhi(Hz),MDVP:Flo(Hz),MDVP:Jitter(%),"
    "MDVP:Jitter(Abs),MDVP:RAP,MDVP:PPQ,Jitter:DDP,MDVP:Shimmer,"
    "MDVP:Shimmer(dB),Shimmer:APQ3,Shimmer:APQ5,MDVP:APQ,Shimmer:DDA,"
    "NHR,HNR,status,RPDE,DFA,spread1,spread2,D2,PPE"
)

# Published range clips (min, max) of the real corpus.
CLIPS = {
    "fo": (88.333, 260.105),
    "fhi": (102.145, 592.030),
    "flo": (65.476, 239.170),
    "jitter": (0.00168, 0.03316),
    "jitter_abs": (0.000007, 0.00026),
    "rap": (0.00068, 0.02144),
    "ppq": (0.00092, 0.01958),
    "shimmer": (0.00954, 0.11908),
    "shimmer_db": (0.085, 1.302),
    "apq3": (0.00455, 0.05647),
    "apq5": (0.00570, 0.07940),
    "apq": (0.00719, 0.13778),
    "nhr": (0.00065, 0.31482),
    "hnr": (8.441, 33.047),
    "rpde": (0.256570, 0.685151),
    "dfa": (0.574282, 0.825288),
    "spread1": (-7.964984, -2.434031),
    "spread2": (0.006274, 0.450493),
    "d2": (1.423287, 3.671155),
    "ppe": (0.044539, 0.527367),
}


def clip(name, value):
    lo, hi = CLIPS[name]
    return float(np.clip(value, lo, hi))


def make_rows():
    rng = np.random.Generator(np.random.Philox(key=SEED))

    # 31 subjects: healthy scattered through the numbering like the original.
    healthy_ids = {2, 5, 9, 13, 18, 22, 26, 30}
    subjects = []
    n_seven = 0
    for s in range(1, 32):
        healthy = s in healthy_ids
        takes = 6
        if not healthy and n_seven < 9:  # 23 patients: 9x7 + 14x6 = 147
            takes = 7
            n_seven += 1
        severity = rng.normal(-1.10, 0.35) if healthy else rng.normal(0.55, 0.55)
        pitch = rng.normal(0.0, 1.0)
        subjects.append((s, healthy, takes, severity, pitch))

    rows = []
    for s, healthy, takes, severity, pitch in subjects:
        for take in range(1, takes + 1):
            g = severity + rng.normal(0.0, 0.28)
            p = pitch + rng.normal(0.0, 0.15)
            u_j, u_s, u_sp = rng.normal(size=3)

            fo = clip("fo", np.exp(5.0526 + 0.24 * p - 0.1375 * g))
            fhi = clip("fhi", fo * (1.0 + 0.06 + np.exp(rng.normal(-2.2, 0.9))))
            flo = clip("flo", fo * (1.0 - 0.05 - min(np.exp(rng.normal(-2.0, 0.8)), 0.6)))

            jitter = clip("jitter", np.exp(-5.25 + 0.346 * g + 0.42 * u_j))
            rap = clip("rap", jitter * np.exp(-0.63 + 0.18 * rng.normal()))
            ppq = clip("ppq", jitter * np.exp(-0.59 + 0.20 * rng.normal()))
            ddp = 3.0 * rap
            jitter_abs = clip("jitter_abs", jitter / fo * np.exp(0.1 * rng.normal()))

            shimmer = clip("shimmer", np.exp(-3.69 + 0.394 * g + 0.40 * u_s))
            shimmer_db = clip("shimmer_db", shimmer * 9.5 * np.exp(0.08 * rng.normal()))
            apq3 = clip("apq3", shimmer * np.exp(-0.64 + 0.10 * rng.normal()))
            apq5 = clip("apq5", shimmer * np.exp(-0.51 + 0.12 * rng.normal()))
            apq = clip("apq", shimmer * np.exp(-0.21 + 0.18 * rng.normal()))
            dda = 3.0 * apq3

            nhr = clip("nhr", np.exp(-4.05 + 0.57 * g + 0.35 * u_j + 0.55 * rng.normal()))
            hnr = clip("hnr", 22.2 - 2.25 * g - 1.8 * u_j - 1.2 * u_s + rng.normal())

            rpde = clip("rpde", 0.474 + 0.0448 * g + 0.07 * rng.normal())
            dfa = clip("dfa", 0.7149 + 0.0176 * g + 0.055 * rng.normal())
            d2 = clip("d2", 2.354 + 0.185 * g + 0.38 * rng.normal())
            spread1 = clip("spread1", -5.808 + 0.864 * g + 0.50 * u_sp)
            spread2 = clip("spread2", 0.219 + 0.053 * g + 0.065 * rng.normal())
            ppe = clip("ppe", 0.197 + 0.067 * g + 0.060 * u_sp + 0.018 * rng.normal())

            name = f"phon_R01_S{s:02d}_{take}"
            rows.append(
                f"{name},{fo:.3f},{fhi:.3f},{flo:.3f},{jitter:.5f},"
                f"{jitter_abs:.8f},{rap:.5f},{ppq:.5f},{ddp:.5f},{shimmer:.5f},"
                f"{shimmer_db:.3f},{apq3:.5f},{apq5:.5f},{apq:.5f},{dda:.5f},"
                f"{nhr:.5f},{hnr:.3f},{0 if healthy else 1},{rpde:.6f},"
                f"{dfa:.6f},{spread1:.6f},{spread2:.6f},{d2:.6f},{ppe:.6f}"
            )
    return rows


def main():
    rows = make_rows()
    assert len(rows) == 195, len(rows)
    out = os.path.normpath(OUT)
    os.makedirs(os.path.dirname(out), exist_ok=True)
    with open(out, "w", newline="") as fh:
        fh.write(HEADER + "\n")
        fh.write("\n".join(rows) + "\n")
    print(f"wrote {out}: {len(rows)} rows")


if __name__ == "__main__":
    main()
