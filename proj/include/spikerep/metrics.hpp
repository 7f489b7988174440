#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "spikerep/gmm.hpp"
#include "spikerep/types.hpp"

namespace spikerep {

// n1: ground-truth events missed; n2: correctly matched; n3: sorter events
// matching no ground-truth event.
struct MatchCounts {
    std::int64_t n1 = 0;
    std::int64_t n2 = 0;
    std::int64_t n3 = 0;
};

struct UnitScore {
    int gt_unit_id = -1;
    int matched_sorter_label = -1;
    double accuracy = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    bool undefined_metric = false;  // a zero denominator was reported as 0
};

struct ScoreAggregate {
    std::vector<UnitScore> per_unit;
    double mean_accuracy = 0.0, sem_accuracy = 0.0;
    double mean_recall = 0.0, sem_recall = 0.0;
    double mean_precision = 0.0, sem_precision = 0.0;
};

struct AblationReport {
    double centroid_distance = 0.0;
    double silhouette = 0.0;
    std::optional<double> ari;  // absent for single-unit test sets
};

struct ProtocolResult {
    double mean = 0.0;
    double sem = 0.0;
    double max = 0.0;
    double min = 0.0;
    std::vector<double> per_seed;
};

double adjusted_rand_index(const std::vector<int>& labels_a,
                           const std::vector<int>& labels_b);

double silhouette_score(const Eigen::MatrixXd& X,
                        const std::vector<int>& labels);

// Greedy one-to-one matching in increasing frame order; both inputs sorted.
MatchCounts match_events(const std::vector<std::int64_t>& gt_frames,
                         const std::vector<std::int64_t>& sorted_frames,
                         std::int64_t delta);

// precision = n2/(n2+n3); recall = n2/(n1+n2); accuracy = n2/(n1+n2+n3).
// Throws when a denominator is zero and n2 > 0 cannot disambiguate; the
// all-zero-n2 case returns zeros.
std::tuple<double, double, double> scores_from_counts(const MatchCounts& c);

// Filters ground-truth units by SNR, best-matches each against every sorter
// label, aggregates mean +- SEM.
ScoreAggregate score_sorting(const GroundTruth& gt, const SortingResult& sr,
                             std::int64_t delta, double snr_floor,
                             const Recording& rec);

// The unit-sampling ARI protocol: per seed, sample n_units units from the
// pool, cluster their representations with GMM K=n_units for gmm_runs
// distinct seeds, average ARI across runs into one data point.
ProtocolResult protocol_ari(const std::map<int, Eigen::MatrixXd>& unit_reps,
                            int n_units, int n_seeds, int gmm_runs,
                            std::uint64_t base_seed = 0);

struct AblationOptions {
    int pca_dims = 2;
    int fallback_clusters = 2;  // K when labels are absent or single-class
    std::uint64_t seed = 0;
};

AblationReport ablation_report(
    const Eigen::MatrixXd& train_reps, const Eigen::MatrixXd& test_reps,
    const std::optional<std::vector<int>>& test_labels = std::nullopt,
    const AblationOptions& opts = {});

// Exact two-sided p for n <= 25 informative pairs, normal approximation with
// continuity correction above. Zero differences dropped, ties mid-ranked.
std::pair<double, double> wilcoxon_signed_rank(const std::vector<double>& a,
                                               const std::vector<double>& b);

}  // namespace spikerep
