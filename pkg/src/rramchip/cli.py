"""Command-line front end: ``rramchip <command> ...``.

Exit codes: 0 success, 1 usage, 2 range/selection/input error, 3 I/O or
transcript parse error, 4 framing/integrity error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .array import N_SUB_ARRAYS, CellAddress, Polarity
from .config import load_config
from .controller import Chip
from .errors import ChipError, InputError
from .population import Population
from .serializer import deserialize_frames, read_trace, write_trace
from .host.campaign import AddressSpan, CampaignSpec, mass_characterize, run_campaign
from .host.driver import ChipSession, read_resistance, run_iv_sweep, write_pulse
from .host.records import RecordWriter
from .host.transcript import TranscriptWriter, replay_file

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return value


def _sub_array(text: str) -> int:
    value = int(text)
    if not 0 <= value < N_SUB_ARRAYS:
        raise argparse.ArgumentTypeError(f"sub-array must be 0..{N_SUB_ARRAYS - 1}")
    return value


def _polarity(text: str) -> Polarity:
    try:
        return {"forward": Polarity.FORWARD, "reverse": Polarity.REVERSE}[text.lower()]
    except KeyError:
        raise argparse.ArgumentTypeError("polarity is forward or reverse") from None


def _common(p: argparse.ArgumentParser, chip: bool = True):
    p.add_argument("--config", help="chip constants (JSON); defaults apply when omitted")
    p.add_argument("--seed", type=_u64, default=0, help="population seed (default 0)")
    p.add_argument("--out", help="output path (default stdout where sensible)")
    p.add_argument("--sub-array", type=_sub_array, default=0)
    if chip:
        p.add_argument("--population", help="population file; overrides --seed")
        p.add_argument("--transcript", help="record the SPI session to this file")
        p.add_argument("--trace-dir", help="write each active sub-array's bitstream trace here")


def _address(p: argparse.ArgumentParser):
    p.add_argument("--row", type=int, default=0)
    p.add_argument("--col", type=int, default=0)
    p.add_argument("--address", help="sub_array:row:col, overrides --sub-array/--row/--col")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="rramchip", description="Simulated RRAM characterization chip and host driver.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("populate", help="build and save a device population")
    _common(p, chip=False)
    p.add_argument("--r-min", type=float, default=1e3)
    p.add_argument("--r-max", type=float, default=1e7)
    p.add_argument("--stuck-open", type=float, default=0.0, help="StuckOpen probability per cell")
    p.add_argument("--stuck-short", type=float, default=0.0, help="StuckShort probability per cell")
    p.add_argument("--only", action="store_true",
                   help="populate just --sub-array; the others keep the default 100 kOhm fill")

    p = sub.add_parser("read", help="read one cell")
    _common(p)
    _address(p)
    p.add_argument("--v-read", type=float, default=0.5)
    p.add_argument("--polarity", type=_polarity, default=Polarity.FORWARD)

    p = sub.add_parser("write", help="apply one programming pulse")
    _common(p)
    _address(p)
    p.add_argument("--v", dest="v_target", type=float, required=True, help="target DUT voltage")
    p.add_argument("--width", type=float, default=100e-9, help="pulse width in seconds")
    p.add_argument("--polarity", type=_polarity, default=Polarity.FORWARD)

    p = sub.add_parser("sweep", help="IV sweep of one cell")
    _common(p)
    _address(p)
    p.add_argument("--v-start", type=float, default=0.05)
    p.add_argument("--v-stop", type=float, default=1.5)
    p.add_argument("--v-step", type=float, default=0.05)
    p.add_argument("--polarity-mode", choices=("Forward", "Reverse", "Both"), default="Forward")

    p = sub.add_parser("campaign", help="mass characterization or a campaign file")
    _common(p)
    p.add_argument("--spec", help="campaign file (JSON); otherwise a mass read of --rows x --cols")
    p.add_argument("--rows", default="0-512", help="half-open row range, e.g. 0-512")
    p.add_argument("--cols", default="0-512", help="half-open column range")
    p.add_argument("--v-read", type=float, default=0.5)
    p.add_argument("--summary", help="summary JSON path (default: stdout)")

    p = sub.add_parser("replay", help="replay an SPI transcript on a fresh chip")
    _common(p)
    p.add_argument("file")
    p.add_argument("--strict", action="store_true", help="exit 4 if the replay raised warnings")

    p = sub.add_parser("decode", help="decode a bitstream trace into packets")
    p.add_argument("file")
    p.add_argument("--out")
    return ap


# -- helpers -----------------------------------------------------------------


def _open_out(path):
    if path is None:
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _session(args) -> ChipSession:
    cfg = load_config(args.config)
    pop = Population.load(args.population) if args.population else Population.log_uniform(args.seed)
    transcript = None
    if args.transcript:
        transcript = TranscriptWriter([f"population chip id {pop.chip_id:04X}"])
    return ChipSession(Chip.from_population(pop, cfg), transcript)


def _finish(session: ChipSession, args):
    digest = session.close()
    if args.transcript:
        session.transcript.save(args.transcript)
    if getattr(args, "trace_dir", None):
        out = Path(args.trace_dir)
        out.mkdir(parents=True, exist_ok=True)
        for sa in range(N_SUB_ARRAYS):
            symbols = session.chip.bitstream(sa)
            if symbols.size:
                write_trace(out / f"sa{sa}.rrsb", symbols, sa)
    return digest


def _addr(args) -> CellAddress:
    if args.address:
        return CellAddress.parse(args.address)
    return CellAddress(args.sub_array, args.row, args.col)


def _span(args) -> AddressSpan:
    def rng(text):
        try:
            a, b = (int(x) for x in text.split("-"))
        except ValueError:
            raise InputError(f"bad range {text!r}, expected a-b") from None
        return a, b
    return AddressSpan(args.sub_array, rng(args.rows), rng(args.cols))


def _write_records(records, path, with_truth=True):
    fh, own = _open_out(path)
    try:
        w = RecordWriter(fh, with_truth)
        for r in records:
            w.write(r)
    finally:
        if own:
            fh.close()


# -- commands ----------------------------------------------------------------


def cmd_populate(args) -> int:
    sas = [args.sub_array] if args.only else range(N_SUB_ARRAYS)
    pop = Population.log_uniform(args.seed, sas, args.r_min, args.r_max, args.stuck_open, args.stuck_short)
    text = json.dumps(pop.doc, indent=2, sort_keys=True) + "\n"
    if args.out:
        pop.save(args.out)
        print(f"chip id {pop.chip_id:04X}", file=sys.stderr)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_read(args) -> int:
    s = _session(args)
    rec = read_resistance(s, _addr(args), args.v_read, args.polarity)
    _write_records([rec], args.out)
    _finish(s, args)
    return EXIT_OK


def cmd_write(args) -> int:
    s = _session(args)
    report = write_pulse(s, _addr(args), args.v_target, args.width, args.polarity)
    fh, own = _open_out(args.out)
    try:
        fh.write(json.dumps(asdict(report), indent=2) + "\n")
    finally:
        if own:
            fh.close()
    _finish(s, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    s = _session(args)
    records = run_iv_sweep(s, _addr(args), args.v_start, args.v_stop, args.v_step, args.polarity_mode)
    _write_records(records, args.out)
    _finish(s, args)
    return EXIT_OK


def cmd_campaign(args) -> int:
    s = _session(args)
    if args.spec:
        spec = CampaignSpec.load(args.spec)
        summary, _ = run_campaign(s, spec, args.out or spec.output_path)
    else:
        fh, own = _open_out(args.out)
        try:
            summary = mass_characterize(s, [_span(args)], fh, args.v_read)
        finally:
            if own:
                fh.close()
    doc = summary.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.summary:
        Path(args.summary).write_text(text, encoding="utf-8")
    elif args.out:
        sys.stdout.write(text)
    else:
        sys.stderr.write(text)
    _finish(s, args)
    return EXIT_OK


def cmd_replay(args) -> int:
    cfg = load_config(args.config)
    pop = Population.load(args.population) if args.population else Population.log_uniform(args.seed)
    result = replay_file(args.file, Chip.from_population(pop, cfg))
    fh, own = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sub_array", "frame_counter", "set", "adc_code", "gain_sel", "col_in_set", "status"])
        for sa, counter, s, p in result.packets():
            w.writerow([sa, counter, s, p.adc_code, p.gain_sel, p.col_in_set, p.status])
    finally:
        if own:
            fh.close()
    for msg in result.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    print(f"bitstream {result.bitstream_hash}", file=sys.stderr)
    if args.strict and result.warnings:
        return 4
    return EXIT_OK


def cmd_decode(args) -> int:
    header, symbols = read_trace(args.file)
    frames = deserialize_frames(symbols)
    fh, own = _open_out(args.out)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sub_array", "frame_counter", "set", "valid", "adc_code", "gain_sel", "col_in_set",
                    "saturated_high", "saturated_low", "register_checksum"])
        for f in frames:
            for s, p in enumerate(f.packets()):
                w.writerow([header.sub_array, f.frame_counter, s, int(p.valid), p.adc_code, p.gain_sel,
                            p.col_in_set, int(p.saturated_high), int(p.saturated_low),
                            f"{f.register_checksum:04X}"])
    finally:
        if own:
            fh.close()
    return EXIT_OK


COMMANDS = {
    "populate": cmd_populate, "read": cmd_read, "write": cmd_write, "sweep": cmd_sweep,
    "campaign": cmd_campaign, "replay": cmd_replay, "decode": cmd_decode,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except BrokenPipeError:
        return EXIT_OK
    except ChipError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


__all__ = ["main", "build_parser"]

if __name__ == "__main__":
    sys.exit(main())
