"""Full-duplex ISAC transceiver optimization."""
