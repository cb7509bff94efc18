"""Beat-level codeword statistics for music corpora.

Encode beat descriptors to codewords, draw year-windowed samples, fit
heavy-tailed count distributions and reversed log-normal loudness, measure
transition-network topology against degree-preserving nulls, and test year
trends.
"""

from .corpus import (BeatDescriptor, Corpus, CorpusFormatError, ParseIssue, Track,
                     corpus_hash, parse_corpus, write_corpus, years_available)
from .distfit import (CorrelationMatrix, DegenerateDataError, FitConvergenceError,
                      LogNormalFit, PowerLawFit, RankedCounts, bootstrap_gof,
                      correlation_matrix, fit_degree_powerlaw, fit_reversed_lognormal,
                      fit_shifted_powerlaw, rank_frequency, spearman)
from .encode import (Codeword, EncoderConfig, FACETS, TimbreCalibration,
                     calibrate_timbre, encode_loudness, encode_pitch, encode_timbre)
from .netkit import (NetworkMetrics, NullMetrics, TransitionNetwork, assortativity_ratio,
                     avg_shortest_path, build_network, clustering, degree_stats,
                     network_metrics, rewire_null, rewired_realizations, small_worldness)
from .sampler import Sample, SampleSpec, draw_sample, sample_loudness_values, sample_plan
from .synthkit import GeneratorSpec, planted_codes, synth_corpus
from .trends import EvolutionReport, FacetYearResult, TrendTest, YearSeries, assemble_report, ols_trend

__version__ = "0.1.0"
