"""Host side: SPI session, resistance reconstruction, sweeps and campaigns."""

from .campaign import AddressSpan, CampaignSpec, CampaignSummary, mass_characterize, run_campaign
from .driver import ChipSession, read_resistance, read_row_batch, run_iv_sweep, solve_drive_voltage, write_pulse
from .records import MeasurementRecord, RecordWriter, read_records
from .transcript import TranscriptWriter, replay_file, replay_transcript

__all__ = [
    "AddressSpan", "CampaignSpec", "CampaignSummary", "mass_characterize", "run_campaign",
    "ChipSession", "read_resistance", "read_row_batch", "run_iv_sweep", "solve_drive_voltage",
    "write_pulse", "MeasurementRecord", "RecordWriter", "read_records", "TranscriptWriter",
    "replay_file", "replay_transcript",
]
