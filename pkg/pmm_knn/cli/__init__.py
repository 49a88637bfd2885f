# Package init for cli
