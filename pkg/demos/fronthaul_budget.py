"""Fronthaul load for antenna-domain versus beam-domain IQ transport.

Streaming per-antenna IQ for a large array saturates any practical fronthaul
link; transporting a handful of beamformed streams instead cuts the load by
the antennas-to-beams ratio. Prints the budget table for a 64-element array.
"""

from oran_isac.ofh import fronthaul_rate


def main() -> None:
    bandwidth = 100e6
    bits = 16
    antennas = 64

    print(f"{antennas}-element array, {bandwidth / 1e6:.0f} MHz, "
          f"{bits}-bit I and Q components\n")
    print(f"{'streams':>8} {'rate':>12} {'reduction':>10}")
    full = fronthaul_rate(antennas, bandwidth, bits)
    for streams in (64, 32, 16, 8, 4, 1):
        rate = fronthaul_rate(streams, bandwidth, bits)
        print(f"{streams:>8} {rate / 1e9:>9.1f} Gbps {full / rate:>9.1f}x")

    print("\nA 100 GbE fronthaul link fits the 8-beam configuration "
          f"({fronthaul_rate(8, bandwidth, bits) / 1e9:.1f} Gbps) but not the "
          f"antenna-domain one ({full / 1e9:.1f} Gbps).")


if __name__ == "__main__":
    main()
