#include "spikerep/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "spikerep/synth.hpp"

namespace spikerep {
namespace {

double choose2(double n) { return n * (n - 1.0) / 2.0; }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

std::pair<double, double> mean_sem(const std::vector<double>& v) {
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (const double x : v) mean += x;
    mean /= n;
    if (v.size() < 2) return {mean, 0.0};
    double var = 0.0;
    for (const double x : v) var += (x - mean) * (x - mean);
    var /= n - 1.0;
    return {mean, std::sqrt(var / n)};
}

}  // namespace

double adjusted_rand_index(const std::vector<int>& labels_a,
                           const std::vector<int>& labels_b) {
    if (labels_a.size() != labels_b.size())
        throw std::invalid_argument("ari: length mismatch");
    if (labels_a.size() < 2)
        throw std::invalid_argument("ari: need at least 2 points");

    std::map<std::pair<int, int>, std::int64_t> contingency;
    std::map<int, std::int64_t> rows, cols;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
        ++contingency[{labels_a[i], labels_b[i]}];
        ++rows[labels_a[i]];
        ++cols[labels_b[i]];
    }

    double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
    for (const auto& [key, n] : contingency) sum_cells += choose2(n);
    for (const auto& [key, n] : rows) sum_rows += choose2(n);
    for (const auto& [key, n] : cols) sum_cols += choose2(n);

    const double total = choose2(static_cast<double>(labels_a.size()));
    const double expected = sum_rows * sum_cols / total;
    const double max_index = 0.5 * (sum_rows + sum_cols);
    if (max_index == expected) return 1.0;  // both labelings trivial
    return (sum_cells - expected) / (max_index - expected);
}

double silhouette_score(const Eigen::MatrixXd& X,
                        const std::vector<int>& labels) {
    const int n = static_cast<int>(X.rows());
    if (static_cast<int>(labels.size()) != n)
        throw std::invalid_argument("silhouette: length mismatch");
    std::map<int, std::vector<int>> clusters;
    for (int i = 0; i < n; ++i) clusters[labels[i]].push_back(i);
    if (clusters.size() < 2)
        throw std::invalid_argument("silhouette: need at least 2 clusters");

    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& own = clusters[labels[i]];
        if (own.size() == 1) continue;  // singleton contributes 0

        double a = 0.0;
        for (const int j : own)
            if (j != i) a += (X.row(i) - X.row(j)).norm();
        a /= static_cast<double>(own.size() - 1);

        double b = std::numeric_limits<double>::infinity();
        for (const auto& [label, members] : clusters) {
            if (label == labels[i]) continue;
            double d = 0.0;
            for (const int j : members) d += (X.row(i) - X.row(j)).norm();
            b = std::min(b, d / static_cast<double>(members.size()));
        }

        const double denom = std::max(a, b);
        total += denom == 0.0 ? 0.0 : (b - a) / denom;
    }
    return total / n;
}

MatchCounts match_events(const std::vector<std::int64_t>& gt_frames,
                         const std::vector<std::int64_t>& sorted_frames,
                         std::int64_t delta) {
    if (delta < 0) throw std::invalid_argument("match: delta must be >= 0");
    if (!std::is_sorted(gt_frames.begin(), gt_frames.end()) ||
        !std::is_sorted(sorted_frames.begin(), sorted_frames.end()))
        throw std::invalid_argument("match: inputs must be sorted");

    std::vector<bool> used(sorted_frames.size(), false);
    MatchCounts counts;
    std::size_t lo = 0;
    for (const auto frame : gt_frames) {
        while (lo < sorted_frames.size() &&
               (used[lo] || sorted_frames[lo] < frame - delta))
            ++lo;
        // nearest unmatched sorter event within +-delta, earlier on ties
        std::size_t best = sorted_frames.size();
        std::int64_t best_dist = delta + 1;
        for (std::size_t j = lo; j < sorted_frames.size(); ++j) {
            if (sorted_frames[j] > frame + delta) break;
            if (used[j]) continue;
            const std::int64_t dist = std::abs(sorted_frames[j] - frame);
            if (dist < best_dist) {
                best_dist = dist;
                best = j;
            }
        }
        if (best < sorted_frames.size()) {
            used[best] = true;
            ++counts.n2;
        } else {
            ++counts.n1;
        }
    }
    for (const bool u : used)
        if (!u) ++counts.n3;
    return counts;
}

std::tuple<double, double, double> scores_from_counts(const MatchCounts& c) {
    if (c.n1 < 0 || c.n2 < 0 || c.n3 < 0)
        throw std::invalid_argument("scores: negative counts");
    if (c.n1 + c.n2 == 0 || c.n2 + c.n3 == 0)
        throw std::invalid_argument("scores: undefined denominator");
    const double n1 = static_cast<double>(c.n1);
    const double n2 = static_cast<double>(c.n2);
    const double n3 = static_cast<double>(c.n3);
    return {n2 / (n1 + n2 + n3), n2 / (n1 + n2), n2 / (n2 + n3)};
}

ScoreAggregate score_sorting(const GroundTruth& gt, const SortingResult& sr,
                             std::int64_t delta, double snr_floor,
                             const Recording& rec) {
    std::map<int, std::vector<std::int64_t>> sorter_trains;
    for (const auto& [frame, label] : sr.events)
        sorter_trains[label].push_back(frame);
    for (auto& [label, frames] : sorter_trains)
        std::sort(frames.begin(), frames.end());

    ScoreAggregate agg;
    for (const auto& [unit, frames] : gt.units) {
        if (snr_of_unit(rec, gt, unit) <= snr_floor) continue;

        UnitScore best;
        best.gt_unit_id = unit;
        bool any = false;
        for (const auto& [label, train] : sorter_trains) {
            const MatchCounts counts = match_events(frames, train, delta);
            UnitScore score;
            score.gt_unit_id = unit;
            score.matched_sorter_label = label;
            if (counts.n2 + counts.n3 == 0) {
                // no sorter event near this unit at all: report zeros, flagged
                score.undefined_metric = true;
            } else {
                std::tie(score.accuracy, score.recall, score.precision) =
                    scores_from_counts(counts);
            }
            if (!any || score.accuracy > best.accuracy) {
                best = score;
                any = true;
            }
        }
        if (!any) {
            // empty sorter output: zeros by the declared convention
            best.undefined_metric = true;
        }
        agg.per_unit.push_back(best);
    }
    if (agg.per_unit.empty())
        throw std::runtime_error("score_sorting: no units above the SNR floor");

    std::vector<double> acc, rec_v, prec;
    for (const auto& u : agg.per_unit) {
        acc.push_back(u.accuracy);
        rec_v.push_back(u.recall);
        prec.push_back(u.precision);
    }
    std::tie(agg.mean_accuracy, agg.sem_accuracy) = mean_sem(acc);
    std::tie(agg.mean_recall, agg.sem_recall) = mean_sem(rec_v);
    std::tie(agg.mean_precision, agg.sem_precision) = mean_sem(prec);
    return agg;
}

ProtocolResult protocol_ari(const std::map<int, Eigen::MatrixXd>& unit_reps,
                            int n_units, int n_seeds, int gmm_runs,
                            std::uint64_t base_seed) {
    if (static_cast<int>(unit_reps.size()) < n_units)
        throw std::invalid_argument("protocol: unit pool smaller than n_units");
    if (n_units < 2 || n_seeds < 1 || gmm_runs < 1)
        throw std::invalid_argument("protocol: invalid parameters");

    std::vector<int> pool;
    for (const auto& [unit, reps] : unit_reps) pool.push_back(unit);

    ProtocolResult result;
    for (int seed = 0; seed < n_seeds; ++seed) {
        Rng rng = Rng(base_seed).substream("protocol", seed);
        // sample n_units distinct units (partial Fisher-Yates)
        std::vector<int> order = pool;
        for (int i = 0; i < n_units; ++i) {
            const int j = static_cast<int>(
                rng.uniform_int(i, static_cast<std::int64_t>(order.size()) - 1));
            std::swap(order[i], order[j]);
        }

        std::int64_t total_rows = 0;
        for (int i = 0; i < n_units; ++i)
            total_rows += unit_reps.at(order[i]).rows();
        Eigen::MatrixXd X(total_rows, unit_reps.begin()->second.cols());
        std::vector<int> labels(total_rows);
        std::int64_t row = 0;
        for (int i = 0; i < n_units; ++i) {
            const auto& reps = unit_reps.at(order[i]);
            X.middleRows(row, reps.rows()) = reps;
            std::fill(labels.begin() + row, labels.begin() + row + reps.rows(), i);
            row += reps.rows();
        }

        double ari_sum = 0.0;
        for (int run = 0; run < gmm_runs; ++run) {
            GmmOptions opts;
            opts.seed = Rng(base_seed)
                            .substream("protocol-gmm", seed)
                            .substream("run", run)
                            .next_u64();
            const GmmModel model = gmm_fit(X, n_units, opts);
            ari_sum += adjusted_rand_index(labels, gmm_assign(model, X));
        }
        result.per_seed.push_back(ari_sum / gmm_runs);
    }

    std::tie(result.mean, result.sem) = mean_sem(result.per_seed);
    result.max = *std::max_element(result.per_seed.begin(), result.per_seed.end());
    result.min = *std::min_element(result.per_seed.begin(), result.per_seed.end());
    return result;
}

AblationReport ablation_report(
    const Eigen::MatrixXd& train_reps, const Eigen::MatrixXd& test_reps,
    const std::optional<std::vector<int>>& test_labels,
    const AblationOptions& opts) {
    if (train_reps.rows() == 0 || test_reps.rows() == 0)
        throw std::invalid_argument("ablation: empty representation set");
    if (train_reps.cols() != test_reps.cols())
        throw std::invalid_argument("ablation: dimension mismatch");

    Eigen::MatrixXd all(train_reps.rows() + test_reps.rows(), train_reps.cols());
    all.topRows(train_reps.rows()) = train_reps;
    all.bottomRows(test_reps.rows()) = test_reps;
    const PcaModel pca = pca_fit(all, opts.pca_dims);

    const Eigen::MatrixXd train_low = pca_transform(pca, train_reps);
    const Eigen::MatrixXd test_low = pca_transform(pca, test_reps);

    AblationReport report;
    report.centroid_distance =
        (test_low.colwise().mean() - train_low.colwise().mean()).norm();

    int n_classes = 0;
    if (test_labels) {
        std::vector<int> sorted = *test_labels;
        std::sort(sorted.begin(), sorted.end());
        n_classes = static_cast<int>(
            std::unique(sorted.begin(), sorted.end()) - sorted.begin());
    }
    const int k = std::max(n_classes, opts.fallback_clusters);
    GmmOptions gmm_opts;
    gmm_opts.seed = opts.seed;
    const GmmModel model = gmm_fit(test_low, k, gmm_opts);
    const std::vector<int> clusters = gmm_assign(model, test_low);
    report.silhouette = silhouette_score(test_low, clusters);
    if (test_labels && n_classes >= 2)
        report.ari = adjusted_rand_index(*test_labels, clusters);
    return report;
}

std::pair<double, double> wilcoxon_signed_rank(const std::vector<double>& a,
                                               const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("wilcoxon: length mismatch");
    std::vector<double> diffs;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) diffs.push_back(a[i] - b[i]);
    const int n = static_cast<int>(diffs.size());
    if (n < 5)
        throw std::invalid_argument("wilcoxon: fewer than 5 informative pairs");

    // mid-ranks of |d|; doubled so that every rank is an integer
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int x, int y) {
        return std::abs(diffs[x]) < std::abs(diffs[y]);
    });
    std::vector<std::int64_t> rank2(n);
    for (int i = 0; i < n;) {
        int j = i;
        while (j < n &&
               std::abs(diffs[order[j]]) == std::abs(diffs[order[i]]))
            ++j;
        const std::int64_t mid2 = (i + 1) + j;  // 2 * average of ranks i+1..j
        for (int k = i; k < j; ++k) rank2[order[k]] = mid2;
        i = j;
    }

    std::int64_t w_plus2 = 0, total2 = 0;
    for (int i = 0; i < n; ++i) {
        total2 += rank2[i];
        if (diffs[i] > 0.0) w_plus2 += rank2[i];
    }
    const std::int64_t w_minus2 = total2 - w_plus2;
    const double statistic = 0.5 * static_cast<double>(std::min(w_plus2, w_minus2));

    double p;
    if (n <= 25) {
        // exact null distribution of W+ by subset-sum counting
        const std::int64_t w2 = std::min(w_plus2, w_minus2);
        std::vector<double> count(total2 + 1, 0.0);
        count[0] = 1.0;
        for (int i = 0; i < n; ++i)
            for (std::int64_t s = total2; s >= rank2[i]; --s)
                count[s] += count[s - rank2[i]];
        double tail = 0.0;
        for (std::int64_t s = 0; s <= w2; ++s) tail += count[s];
        p = std::min(1.0, 2.0 * tail / std::pow(2.0, n));
    } else {
        const double nn = static_cast<double>(n);
        double tie_term = 0.0;
        {
            std::vector<std::int64_t> sorted = rank2;
            std::sort(sorted.begin(), sorted.end());
            for (std::size_t i = 0; i < sorted.size();) {
                std::size_t j = i;
                while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
                const double t = static_cast<double>(j - i);
                tie_term += t * t * t - t;
                i = j;
            }
        }
        const double mean = nn * (nn + 1.0) / 4.0;
        const double var =
            nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
        const double z = (statistic - mean + 0.5) / std::sqrt(var);
        p = std::min(1.0, 2.0 * normal_cdf(z));
    }
    return {statistic, p};
}

}  // namespace spikerep
