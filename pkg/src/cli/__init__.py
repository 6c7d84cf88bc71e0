# src/cli — Command line and run-configuration files
