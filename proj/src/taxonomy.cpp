#include "hpt/taxonomy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hpt {

using ordered_json = nlohmann::ordered_json;

const ClassDescriptor* DatasetManifest::find_class(int class_id) const {
    for (const auto& c : classes)
        if (c.class_id == class_id) return &c;
    return nullptr;
}

std::vector<int> DatasetManifest::class_ids() const {
    std::vector<int> ids;
    ids.reserve(classes.size());
    for (const auto& c : classes) ids.push_back(c.class_id);
    return ids;
}

std::vector<std::string> validate_hierarchy(const DatasetManifest& manifest) {
    std::vector<std::string> violations;
    std::map<std::string, std::pair<std::string, std::string>> final_parent;
    std::set<std::string> duplicate_reported;
    std::map<std::string, std::string> secondary_parent;

    for (const auto& c : manifest.classes) {
        if (c.primary.empty()) violations.push_back("empty level name: primary of class " + std::to_string(c.class_id));
        if (c.secondary.empty())
            violations.push_back("empty level name: secondary of class " + std::to_string(c.class_id));
        if (c.final.empty()) violations.push_back("empty level name: final of class " + std::to_string(c.class_id));
        if (c.final.empty()) continue;

        auto parent = std::make_pair(c.primary, c.secondary);
        auto it = final_parent.find(c.final);
        if (it == final_parent.end()) {
            final_parent.emplace(c.final, parent);
        } else if (it->second != parent) {
            if (duplicate_reported.insert(c.final).second)
                violations.push_back("hierarchy violation: final '" + c.final +
                                     "' maps to multiple (primary, secondary) pairs");
        } else {
            if (duplicate_reported.insert(c.final).second)
                violations.push_back("duplicate final '" + c.final + "'");
        }

        if (!c.secondary.empty()) {
            auto sit = secondary_parent.find(c.secondary);
            if (sit == secondary_parent.end()) {
                secondary_parent.emplace(c.secondary, c.primary);
            } else if (sit->second != c.primary) {
                violations.push_back("hierarchy violation: secondary '" + c.secondary +
                                     "' appears under multiple primaries");
            }
        }
    }
    return violations;
}

namespace {

void validate_manifest(const DatasetManifest& m) {
    if (m.classes.size() < 2) throw std::runtime_error("manifest needs at least 2 classes");
    std::set<int> ids;
    for (const auto& c : m.classes) {
        if (c.class_id < 0) throw std::runtime_error("negative class_id " + std::to_string(c.class_id));
        if (!ids.insert(c.class_id).second)
            throw std::runtime_error("duplicate class_id " + std::to_string(c.class_id));
    }
    auto violations = validate_hierarchy(m);
    if (!violations.empty()) throw std::runtime_error(violations.front());
    for (std::size_t i = 0; i < m.records.size(); ++i) {
        const auto& r = m.records[i];
        if (!ids.count(r.class_id))
            throw std::runtime_error("unresolved class " + std::to_string(r.class_id) + " in record " +
                                     std::to_string(i));
        if (r.height < 1 || r.width < 1)
            throw std::runtime_error("invalid record dimensions in record " + std::to_string(i));
    }
}

}  // namespace

DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw std::runtime_error("manifest parse error: " + std::string(e.what()));
    }
    DatasetManifest m;
    try {
        m.name = j.at("name").get<std::string>();
        for (const auto& jc : j.at("classes")) {
            ClassDescriptor c;
            c.class_id = jc.at("class_id").get<int>();
            c.primary = jc.at("primary").get<std::string>();
            c.secondary = jc.at("secondary").get<std::string>();
            c.final = jc.at("final").get<std::string>();
            m.classes.push_back(std::move(c));
        }
        for (const auto& jr : j.at("records")) {
            ImageRecord r;
            r.image_ref = jr.at("image_ref").get<std::string>();
            r.class_id = jr.at("class_id").get<int>();
            r.height = jr.at("height").get<int>();
            r.width = jr.at("width").get<int>();
            m.records.push_back(std::move(r));
        }
    } catch (const ordered_json::exception& e) {
        throw std::runtime_error("manifest parse error: " + std::string(e.what()));
    }
    validate_manifest(m);
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
    ordered_json j;
    j["name"] = manifest.name;
    j["classes"] = ordered_json::array();
    for (const auto& c : manifest.classes) {
        ordered_json jc;
        jc["class_id"] = c.class_id;
        jc["primary"] = c.primary;
        jc["secondary"] = c.secondary;
        jc["final"] = c.final;
        j["classes"].push_back(std::move(jc));
    }
    j["records"] = ordered_json::array();
    for (const auto& r : manifest.records) {
        ordered_json jr;
        jr["image_ref"] = r.image_ref;
        jr["class_id"] = r.class_id;
        jr["height"] = r.height;
        jr["width"] = r.width;
        j["records"].push_back(std::move(jr));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed: " + path);
}

SplitSpec make_base_new_split(const DatasetManifest& manifest, double base_fraction, SplitOrdering ordering) {
    const std::size_t n_classes = manifest.classes.size();
    if (n_classes < 2) throw std::invalid_argument("fewer than 2 classes");
    if (!(base_fraction > 0.0 && base_fraction < 1.0))
        throw std::invalid_argument("base_fraction must lie in (0, 1)");

    std::vector<const ClassDescriptor*> order;
    order.reserve(n_classes);
    for (const auto& c : manifest.classes) order.push_back(&c);
    if (ordering == SplitOrdering::alphabetical_by_final) {
        std::sort(order.begin(), order.end(),
                  [](const ClassDescriptor* a, const ClassDescriptor* b) { return a->final < b->final; });
    }

    auto n_base = static_cast<std::size_t>(std::ceil(static_cast<double>(n_classes) * base_fraction));
    if (n_base == 0 || n_base >= n_classes)
        throw std::invalid_argument("base_fraction leaves base or new classes empty");

    SplitSpec split;
    for (std::size_t i = 0; i < n_classes; ++i) {
        if (i < n_base)
            split.base_class_ids.push_back(order[i]->class_id);
        else
            split.new_class_ids.push_back(order[i]->class_id);
    }
    return split;
}

SplitOrdering parse_split_ordering(const std::string& name) {
    if (name == "alphabetical-by-final" || name == "alphabetical") return SplitOrdering::alphabetical_by_final;
    if (name == "manifest-order" || name == "manifest") return SplitOrdering::manifest_order;
    throw std::invalid_argument("unknown split ordering: " + name);
}

}  // namespace hpt
