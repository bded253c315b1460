"""Domain logic: channels, SINR algebra, conic programs and optimizers."""
