#include "coea/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "coea/errors.hpp"

namespace coea {

namespace {

const UserGroundTruth& truth_for(const TruthMap& truths, const UserId& user) {
    auto it = truths.find(user);
    if (it == truths.end()) throw DataError("no ground truth for user " + user);
    return it->second;
}

void check_length(const RecommendationList& list, size_t k_eval) {
    if (list.ranked.size() < k_eval)
        throw DataError("recommendation list for user " + list.user_id + " has " +
                        std::to_string(list.ranked.size()) + " entries, need " +
                        std::to_string(k_eval));
}

}  // namespace

double category_hit_rate(const std::vector<RecommendationList>& lists, const TruthMap& truths,
                         size_t k_eval, std::map<UserId, double>* per_user) {
    if (lists.empty()) throw DataError("hit rate needs at least one list");
    double sum = 0.0;
    for (const auto& list : lists) {
        check_length(list, k_eval);
        const auto& truth = truth_for(truths, list.user_id);
        size_t hit = 0;
        for (size_t i = 0; i < k_eval; ++i)
            if (truth.preferred.count(list.ranked[i])) ++hit;
        double v = static_cast<double>(hit) / static_cast<double>(k_eval);
        if (per_user) (*per_user)[list.user_id] = v;
        sum += v;
    }
    return sum / static_cast<double>(lists.size());
}

double category_ndcg(const std::vector<RecommendationList>& lists, const TruthMap& truths,
                     size_t k_eval, size_t* excluded, std::map<UserId, double>* per_user) {
    if (lists.empty()) throw DataError("ndcg needs at least one list");
    double sum = 0.0;
    size_t included = 0;
    for (const auto& list : lists) {
        check_length(list, k_eval);
        const auto& truth = truth_for(truths, list.user_id);
        double dcg = 0.0;
        size_t relevant = 0;
        for (size_t i = 0; i < k_eval; ++i) {
            if (truth.test_clicked.count(list.ranked[i])) {
                dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);  // position i+1
                ++relevant;
            }
        }
        if (relevant == 0) {
            if (excluded) ++(*excluded);
            continue;
        }
        double idcg = 0.0;
        for (size_t i = 0; i < relevant; ++i)
            idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
        double v = dcg / idcg;
        if (per_user) (*per_user)[list.user_id] = v;
        sum += v;
        ++included;
    }
    return included == 0 ? 0.0 : sum / static_cast<double>(included);
}

double novel_category_proportion(const std::vector<RecommendationList>& lists,
                                 const TruthMap& truths, size_t k_eval, size_t n_categories,
                                 std::map<UserId, double>* per_user) {
    if (lists.empty()) throw DataError("ncp needs at least one list");
    if (n_categories == 0) throw UsageError("ncp needs a positive category count");
    double sum = 0.0;
    for (const auto& list : lists) {
        check_length(list, k_eval);
        const auto& truth = truth_for(truths, list.user_id);
        size_t novel = 0;
        for (size_t i = 0; i < k_eval; ++i)
            if (!truth.historical.count(list.ranked[i])) ++novel;
        double v = static_cast<double>(novel) / static_cast<double>(n_categories);
        if (per_user) (*per_user)[list.user_id] = v;
        sum += v;
    }
    return sum / static_cast<double>(lists.size());
}

double category_long_tail_proportion(const std::vector<RecommendationList>& lists,
                                     const std::set<std::string>& tail, size_t k_eval,
                                     size_t n_categories,
                                     std::map<UserId, double>* per_user) {
    if (lists.empty()) throw DataError("cltp needs at least one list");
    if (n_categories == 0) throw UsageError("cltp needs a positive category count");
    double sum = 0.0;
    for (const auto& list : lists) {
        check_length(list, k_eval);
        size_t in_tail = 0;
        for (size_t i = 0; i < k_eval; ++i)
            if (tail.count(list.ranked[i])) ++in_tail;
        double v = static_cast<double>(in_tail) / static_cast<double>(n_categories);
        if (per_user) (*per_user)[list.user_id] = v;
        sum += v;
    }
    return sum / static_cast<double>(lists.size());
}

std::set<std::string> long_tail_set(const std::map<std::string, size_t>& click_volume,
                                    const std::vector<std::string>& all_categories) {
    if (all_categories.empty()) throw DataError("long_tail_set: empty category list");
    std::vector<std::pair<size_t, std::string>> ranked;
    ranked.reserve(all_categories.size());
    for (const auto& c : all_categories) {
        auto it = click_volume.find(c);
        ranked.emplace_back(it == click_volume.end() ? 0 : it->second, c);
    }
    std::sort(ranked.begin(), ranked.end());
    size_t n = static_cast<size_t>(
        std::ceil(0.2 * static_cast<double>(all_categories.size())));
    std::set<std::string> tail;
    for (size_t i = 0; i < n && i < ranked.size(); ++i) tail.insert(ranked[i].second);
    return tail;
}

MetricReport evaluate_lists(const std::vector<RecommendationList>& lists, const TruthMap& truths,
                            const std::set<std::string>& tail, size_t k_eval,
                            size_t n_categories) {
    MetricReport r;
    r.k_eval = k_eval;
    r.n_users = lists.size();
    size_t excluded = 0;
    r.c_h = category_hit_rate(lists, truths, k_eval, &r.per_user_hit);
    r.c_n = category_ndcg(lists, truths, k_eval, &excluded, &r.per_user_ndcg);
    r.n_ndcg_users = lists.size() - excluded;
    r.ncp = novel_category_proportion(lists, truths, k_eval, n_categories, &r.per_user_ncp);
    r.cltp = category_long_tail_proportion(lists, tail, k_eval, n_categories, &r.per_user_cltp);
    return r;
}

std::string metric_csv(const MetricReport& report) {
    std::ostringstream out;
    char buf[96];
    out << "metric,K,mean,n_users\n";
    std::snprintf(buf, sizeof(buf), "C-H,%zu,%.9f,%zu\n", report.k_eval, report.c_h,
                  report.n_users);
    out << buf;
    std::snprintf(buf, sizeof(buf), "C-N,%zu,%.9f,%zu\n", report.k_eval, report.c_n,
                  report.n_ndcg_users);
    out << buf;
    std::snprintf(buf, sizeof(buf), "NCP,%zu,%.9f,%zu\n", report.k_eval, report.ncp,
                  report.n_users);
    out << buf;
    std::snprintf(buf, sizeof(buf), "CLTP,%zu,%.9f,%zu\n", report.k_eval, report.cltp,
                  report.n_users);
    out << buf;
    return out.str();
}

std::string per_user_tsv(const MetricReport& report) {
    std::ostringstream out;
    char buf[64];
    out << "user\thit\tndcg\tncp\tcltp\n";
    for (const auto& [user, hit] : report.per_user_hit) {
        out << user << '\t';
        std::snprintf(buf, sizeof(buf), "%.9f\t", hit);
        out << buf;
        auto nd = report.per_user_ndcg.find(user);
        if (nd == report.per_user_ndcg.end())
            out << "excluded\t";
        else {
            std::snprintf(buf, sizeof(buf), "%.9f\t", nd->second);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.9f\t", report.per_user_ncp.at(user));
        out << buf;
        std::snprintf(buf, sizeof(buf), "%.9f\n", report.per_user_cltp.at(user));
        out << buf;
    }
    return out.str();
}

Matrix group_similarity_analysis(const std::vector<SemanticGroup>& groups,
                                 const std::map<UserId, Vec>& reps, size_t n_groups_sampled,
                                 size_t subset_size, Rng& rng,
                                 std::vector<GroupCSID>* sampled, size_t* skipped) {
    if (subset_size == 0) throw UsageError("subset_size must be positive");
    std::vector<const SemanticGroup*> eligible;
    for (const auto& g : groups) {
        if (g.members.size() >= 2 * subset_size)
            eligible.push_back(&g);
        else if (skipped)
            ++(*skipped);
    }
    if (eligible.size() > n_groups_sampled) {
        auto picks = rng.sample_without_replacement(eligible.size(), n_groups_sampled);
        std::sort(picks.begin(), picks.end());
        std::vector<const SemanticGroup*> chosen;
        for (size_t i : picks) chosen.push_back(eligible[i]);
        eligible = std::move(chosen);
    }

    size_t n = eligible.size();
    std::vector<Vec> mean_a(n), mean_b(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& g = *eligible[i];
        auto picks = rng.sample_without_replacement(g.members.size(), 2 * subset_size);
        Vec a(g.centroid.size(), 0.0), b(g.centroid.size(), 0.0);
        for (size_t j = 0; j < subset_size; ++j) {
            const Vec& u = reps.at(g.members[picks[j]]);
            const Vec& v = reps.at(g.members[picks[subset_size + j]]);
            for (size_t d = 0; d < a.size(); ++d) {
                a[d] += u[d];
                b[d] += v[d];
            }
        }
        double inv = 1.0 / static_cast<double>(subset_size);
        for (size_t d = 0; d < a.size(); ++d) {
            a[d] *= inv;
            b[d] *= inv;
        }
        mean_a[i] = std::move(a);
        mean_b[i] = std::move(b);
        if (sampled) sampled->push_back(g.csid);
    }

    Matrix sim(n, n);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < n; ++j)
            sim(i, j) = i == j ? cosine_similarity(mean_a[i], mean_b[i])
                               : cosine_similarity(mean_a[i], mean_a[j]);
    return sim;
}

double mean_intra_similarity(const Matrix& m) {
    if (m.rows() == 0) throw DataError("empty similarity matrix");
    double sum = 0.0;
    for (size_t i = 0; i < m.rows(); ++i) sum += m(i, i);
    return sum / static_cast<double>(m.rows());
}

double mean_inter_similarity(const Matrix& m) {
    if (m.rows() < 2) throw DataError("inter-group similarity needs at least two groups");
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = 0; i < m.rows(); ++i)
        for (size_t j = 0; j < m.cols(); ++j)
            if (i != j) {
                sum += m(i, j);
                ++count;
            }
    return sum / static_cast<double>(count);
}

Vec category_user_similarity(const Vec& category_rep, const std::vector<Vec>& user_reps) {
    Vec out;
    out.reserve(user_reps.size());
    for (const auto& u : user_reps) out.push_back(cosine_similarity(category_rep, u));
    return out;
}

std::string similarity_csv(const Matrix& m, const std::vector<GroupCSID>& labels) {
    std::ostringstream out;
    out << "group";
    for (const auto& l : labels) out << ',' << csid_to_string(l);
    out << '\n';
    char buf[48];
    for (size_t i = 0; i < m.rows(); ++i) {
        out << csid_to_string(labels[i]);
        for (size_t j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), ",%.9f", m(i, j));
            out << buf;
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace coea
