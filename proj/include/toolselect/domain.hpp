#pragma once

// Vocabulary of the routing problem: tasks, queries, ground truths, tools,
// label alignment, panels and per-task costs.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace toolselect::domain {

using TaskId = std::uint32_t;
using ToolId = std::uint32_t;

enum class TaskFamily { Classification, Grounding, ReportGeneration, MultipleChoice };

std::string_view family_name(TaskFamily family);
/// Throws UnknownTask for names outside the closed enumeration.
TaskFamily parse_family(std::string_view name);
bool is_categorical(TaskFamily family);

/// Output vocabulary shared by every tool of a task. For categorical
/// families the labels are class names / option letters; for Grounding they
/// name the four box coordinates; for ReportGeneration they are the
/// (finding, location) pair vocabulary.
struct CanonicalLabelSpace {
    TaskFamily family = TaskFamily::Classification;
    std::vector<std::string> labels;

    std::size_t size() const noexcept { return labels.size(); }
};

struct TaskInfo {
    TaskId id = 0;
    TaskFamily family = TaskFamily::Classification;
    CanonicalLabelSpace space;
};

/// Unit-square box, x1 < x2 and y1 < y2 for well-formed boxes.
struct Box {
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    double area() const noexcept;
    bool operator==(const Box&) const = default;
};

double iou(const Box& a, const Box& b);

struct FindingPair {
    std::string finding;
    std::string location;

    auto operator<=>(const FindingPair&) const = default;
};

using FindingSet = std::set<FindingPair>;

/// F1 between two pair sets under exact matching; two empty sets score 1.
double findings_f1(const FindingSet& predicted, const FindingSet& truth);

struct ClassLabel {
    std::size_t index = 0;
    bool operator==(const ClassLabel&) const = default;
};

struct OptionChoice {
    std::size_t index = 0;
    bool operator==(const OptionChoice&) const = default;
};

using GroundTruth = std::variant<ClassLabel, Box, FindingSet, OptionChoice>;

TaskFamily family_of(const GroundTruth& gt);

struct Query {
    std::uint64_t uid = 0;
    TaskId task = 0;
    std::vector<double> x;  // image features
    std::vector<double> q;  // instruction features

    bool operator==(const Query&) const = default;
};

/// Tool output in the tool's own label space.
struct CategoricalScores {
    std::vector<double> probs;
};
struct Abstain {};
using RawPrediction = std::variant<CategoricalScores, Box, FindingSet, Abstain>;

/// Tool output mapped into the canonical space. Categorical outputs are a
/// probability vector over canonical labels. Null predictions carry a
/// uniform vector over the canonical space and is_null = true.
struct AlignedPrediction {
    std::variant<std::vector<double>, Box, FindingSet> payload;
    bool is_null = false;

    const std::vector<double>& probs() const { return std::get<std::vector<double>>(payload); }
    bool operator==(const AlignedPrediction&) const = default;
};

AlignedPrediction null_prediction(const CanonicalLabelSpace& space);

/// Map from each tool label to the canonical labels it covers.
struct LabelAlignment {
    std::vector<std::vector<std::size_t>> preimage_of;  // tool label -> canonical labels

    std::size_t tool_label_count() const noexcept { return preimage_of.size(); }
    static LabelAlignment identity(std::size_t n);
    bool operator==(const LabelAlignment&) const = default;
};

struct ReferenceElement {
    std::uint64_t uid = 0;
    std::vector<double> x;
    GroundTruth y;
    AlignedPrediction prediction;

    bool operator==(const ReferenceElement&) const = default;
};

/// Small frozen record of a tool's behaviour on one task.
struct ReferenceSet {
    TaskId task = 0;
    std::vector<ReferenceElement> elements;

    std::size_t size() const noexcept { return elements.size(); }
    bool operator==(const ReferenceSet&) const = default;
};

struct Tool {
    ToolId id = 0;
    std::set<TaskId> supported_tasks;
    std::map<TaskId, LabelAlignment> alignment;  // categorical supported tasks only
    std::map<TaskId, ReferenceSet> references;
    std::vector<double> metadata;  // support breadth, training-size proxy

    bool supports(TaskId task) const { return supported_tasks.contains(task); }
    bool operator==(const Tool&) const = default;
};

/// Ordered tool references for one routing decision; duplicates allowed.
struct Panel {
    TaskId task = 0;
    std::vector<const Tool*> tools;

    std::size_t size() const noexcept { return tools.size(); }
};

/// Bounded task cost in [0, 1].
class Cost {
public:
    Cost() = default;
    explicit Cost(double value);
    double value() const noexcept { return value_; }

private:
    double value_ = 0.0;
};

/// Prompt metadata handed to the task assignment rule.
struct PromptDescriptor {
    std::string family;
    std::size_t world_task = 0;
};

/// Deterministic prompt -> task rule over the world's task table.
TaskId assign_task(const PromptDescriptor& descriptor, std::span<const TaskInfo> tasks);

bool validity(const Tool& tool, const Query& query);

/// Aligns a raw prediction into the canonical space of `task`.
AlignedPrediction align(const Tool& tool, const TaskInfo& task, const RawPrediction& raw);

enum class ClassificationCost { ZeroOne, ClippedCrossEntropy };

/// Lowest index among the maxima.
std::size_t argmax_lowest(std::span<const double> values);

Cost cost(TaskFamily family, const AlignedPrediction& pred, const GroundTruth& gt,
          ClassificationCost variant = ClassificationCost::ZeroOne);

/// Fixed-width numeric view of an aligned prediction used as selector input:
/// categorical vectors zero-padded, boxes as four corners, pair sets as an
/// indicator over the canonical vocabulary, truncated to `width`.
std::vector<double> prediction_slot(const AlignedPrediction& pred, const CanonicalLabelSpace& space, std::size_t width);

/// Fixed-width numeric view of a non-categorical ground truth.
std::vector<double> truth_encoding(const GroundTruth& gt, const CanonicalLabelSpace& space, std::size_t width);

std::string pair_label(const FindingPair& pair);

} // namespace toolselect::domain
