"""Smoke test for the biomark extension: one sale, verification, attacks, EER.

Build and install first, e.g. `maturin develop -m crates/python/Cargo.toml`
or `pip install crates/python`.
"""

import sys
import tempfile
from pathlib import Path

import biomark

MASTER = "5a" * 32


def main() -> int:
    carrier = biomark.synth_carrier(512, seed=1)
    provider = biomark.FingerCode.extract(biomark.synth_fingerprint(0))
    customer = biomark.FingerCode.extract(biomark.synth_fingerprint(1))
    customer_again = biomark.FingerCode.extract(biomark.synth_fingerprint(1, sample=2))
    assert len(provider) == 512

    # BioHash is deterministic and sized
    code = biomark.biohash(provider, MASTER)
    assert len(code) == 256 and code == biomark.biohash(provider, MASTER)
    assert code.distance(biomark.BioCode.from_hex(code.hex())) == 0.0

    ledger = biomark.Ledger()
    proto = biomark.Protocol()
    marked, info = proto.issue(carrier, provider, MASTER, customer, "pw", ledger)
    assert info["k"] == 1 and len(ledger) == 1
    assert biomark.psnr(carrier, marked) >= 40.0
    assert biomark.sale_identifier(marked) == biomark.sale_identifier(carrier) == info["image_id"]

    owner = proto.verify_ownership(marked, provider, MASTER, ledger)
    assert owner["matched"] and owner["k"] == 1 and owner["distance"] == 0.0, owner
    matched, dist = proto.verify_usage(marked, customer_again, "pw", info["otp"])
    assert matched, dist
    assert not proto.verify_usage(marked, customer, "wrong", info["otp"])[0]

    jpeg = biomark.apply_attack(marked, "jpeg:q=90")
    assert proto.verify_ownership(jpeg, provider, MASTER, ledger)["matched"]

    # raw embed/extract round trip
    mark = "c3" * 512
    assert biomark.extract(biomark.embed(carrier, mark)) == mark

    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "marked.png"
        marked.save(str(path))
        assert biomark.GrayImage.load(str(path)) == marked
        raw = biomark.GrayImage(4, 2, bytes(range(8)))
        assert raw.to_bytes() == bytes(range(8))

        cfg = Path(d) / "eval.toml"
        cfg.write_text(
            'seed = 1\nattacks = ["identity"]\n[synthetic]\n'
            "users = 3\nsamples = 2\ncarriers = 1\ncarrier_size = 256\nfingerprint_size = 128\n"
        )
        report = biomark.evaluate(str(cfg)).splitlines()
        assert report[0].startswith("attack_kind,level")
        assert report[1].startswith("contrast,1,0.000000")

    eer, _ = biomark.compute_eer([0.0, 0.1, 0.2], [0.5, 0.6, 0.7])
    assert eer == 0.0

    try:
        biomark.biohash(provider, "not-hex")
    except ValueError:
        pass
    else:
        raise AssertionError("bad seed accepted")

    print("biomark smoke test: ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
