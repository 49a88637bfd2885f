# Package init for core: data, aggregation, classifier, evaluation, dataio, runner, fetch
