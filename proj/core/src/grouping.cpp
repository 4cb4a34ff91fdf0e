#include "coea/grouping.hpp"

#include <algorithm>
#include <sstream>

#include "coea/errors.hpp"

namespace coea {

std::vector<SemanticGroup> build_groups(const std::map<UserId, GroupCSID>& assignments,
                                        const std::map<UserId, Vec>& reps) {
    std::map<GroupCSID, SemanticGroup> by_csid;
    for (const auto& [user, csid] : assignments) {
        auto rep = reps.find(user);
        if (rep == reps.end()) throw DataError("no representation for assigned user " + user);
        auto& g = by_csid[csid];
        if (g.members.empty()) {
            g.csid = csid;
            g.centroid.assign(rep->second.size(), 0.0);
        }
        if (g.centroid.size() != rep->second.size())
            throw DataError("representation dim mismatch for user " + user);
        for (size_t j = 0; j < g.centroid.size(); ++j) g.centroid[j] += rep->second[j];
        g.members.push_back(user);
    }
    std::vector<SemanticGroup> out;
    out.reserve(by_csid.size());
    for (auto& [csid, g] : by_csid) {
        double inv = 1.0 / static_cast<double>(g.members.size());
        for (double& v : g.centroid) v *= inv;
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<UserId> select_representatives(const SemanticGroup& group,
                                           const std::map<UserId, Vec>& reps, size_t k) {
    std::vector<std::pair<double, UserId>> ranked;
    ranked.reserve(group.members.size());
    for (const auto& user : group.members) {
        auto it = reps.find(user);
        if (it == reps.end()) throw DataError("no representation for group member " + user);
        ranked.emplace_back(
            l2_distance_sq(it->second.data(), group.centroid.data(), group.centroid.size()),
            user);
    }
    std::sort(ranked.begin(), ranked.end());
    std::vector<UserId> out;
    size_t n = std::min(k, ranked.size());
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(ranked[i].second);
    return out;
}

GroupCSID default_group(const std::vector<SemanticGroup>& groups) {
    if (groups.empty()) throw DataError("default_group: no groups");
    const SemanticGroup* best = &groups[0];
    for (const auto& g : groups)
        if (g.members.size() > best->members.size() ||
            (g.members.size() == best->members.size() && g.csid < best->csid))
            best = &g;
    return best->csid;
}

std::string format_group_table(const std::vector<SemanticGroup>& groups,
                               const std::vector<GroupProfile>& profiles) {
    std::map<GroupCSID, const GroupProfile*> by_csid;
    for (const auto& p : profiles) by_csid[p.csid] = &p;
    std::ostringstream out;
    for (const auto& g : groups) {
        auto it = by_csid.find(g.csid);
        out << csid_to_string(g.csid) << '\t' << g.members.size() << '\t';
        if (it != by_csid.end()) {
            const auto& reps = it->second->representative_users;
            for (size_t i = 0; i < reps.size(); ++i) {
                if (i) out << ',';
                out << reps[i];
            }
            out << '\t';
            for (char c : it->second->profile_text) out << (c == '\t' || c == '\n' ? ' ' : c);
        } else {
            out << '\t';
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace coea
