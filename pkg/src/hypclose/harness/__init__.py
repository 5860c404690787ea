"""Systems, orbits, configuration, records and the command line."""
