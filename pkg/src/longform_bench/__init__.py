"""Quality screening, acoustic IDS/ADS contrasts and predictive-coding
predictability for utterances from long-form child-centred recordings."""

__version__ = "0.1.0"
