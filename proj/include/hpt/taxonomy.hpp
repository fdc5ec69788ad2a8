#pragma once

#include <string>
#include <vector>

namespace hpt {

// One fine-grained class with its three-level hierarchy.
struct ClassDescriptor {
    int class_id = 0;
    std::string primary;
    std::string secondary;
    std::string final;

    bool operator==(const ClassDescriptor&) const = default;
};

struct ImageRecord {
    std::string image_ref;  // relative path or "inline:<base64 rgb8>"
    int class_id = 0;
    int height = 0;
    int width = 0;

    bool operator==(const ImageRecord&) const = default;
};

struct DatasetManifest {
    std::string name;
    std::vector<ClassDescriptor> classes;
    std::vector<ImageRecord> records;

    const ClassDescriptor* find_class(int class_id) const;
    std::vector<int> class_ids() const;

    bool operator==(const DatasetManifest&) const = default;
};

enum class SplitOrdering { alphabetical_by_final, manifest_order };

// Disjoint base/new class id sets; union covers the manifest.
struct SplitSpec {
    std::vector<int> base_class_ids;
    std::vector<int> new_class_ids;
};

// Loads and fully validates a manifest file. Throws on parse errors,
// unresolved class ids, duplicate finals and hierarchy violations.
DatasetManifest load_manifest(const std::string& path);
void save_manifest(const DatasetManifest& manifest, const std::string& path);

// Returns violation messages; empty iff (primary -> secondary -> final) is a tree.
std::vector<std::string> validate_hierarchy(const DatasetManifest& manifest);

// First ceil(C * base_fraction) classes under the chosen ordering become base.
SplitSpec make_base_new_split(const DatasetManifest& manifest, double base_fraction, SplitOrdering ordering);

SplitOrdering parse_split_ordering(const std::string& name);

}  // namespace hpt
