#include "toolselect/domain.hpp"

#include <algorithm>
#include <cmath>

#include "toolselect/errors.hpp"

namespace toolselect::domain {

std::string_view family_name(TaskFamily family) {
    switch (family) {
    case TaskFamily::Classification: return "classification";
    case TaskFamily::Grounding: return "grounding";
    case TaskFamily::ReportGeneration: return "report_generation";
    case TaskFamily::MultipleChoice: return "multiple_choice";
    }
    return "unknown";
}

TaskFamily parse_family(std::string_view name) {
    for (auto f : {TaskFamily::Classification, TaskFamily::Grounding, TaskFamily::ReportGeneration,
                   TaskFamily::MultipleChoice}) {
        if (family_name(f) == name) return f;
    }
    throw UnknownTask("unknown task family '" + std::string(name) + "'");
}

bool is_categorical(TaskFamily family) {
    return family == TaskFamily::Classification || family == TaskFamily::MultipleChoice;
}

double Box::area() const noexcept {
    if (!(x2 > x1) || !(y2 > y1)) return 0.0;
    return (x2 - x1) * (y2 - y1);
}

double iou(const Box& a, const Box& b) {
    const double area_a = a.area();
    const double area_b = b.area();
    if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
    const double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
    const double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (area_a + area_b - inter);
}

double findings_f1(const FindingSet& predicted, const FindingSet& truth) {
    if (predicted.empty() && truth.empty()) return 1.0;
    if (predicted.empty() || truth.empty()) return 0.0;
    std::size_t hits = 0;
    for (const auto& p : predicted) hits += truth.contains(p) ? 1 : 0;
    if (hits == 0) return 0.0;
    const double precision = static_cast<double>(hits) / static_cast<double>(predicted.size());
    const double recall = static_cast<double>(hits) / static_cast<double>(truth.size());
    return 2.0 * precision * recall / (precision + recall);
}

TaskFamily family_of(const GroundTruth& gt) {
    switch (gt.index()) {
    case 0: return TaskFamily::Classification;
    case 1: return TaskFamily::Grounding;
    case 2: return TaskFamily::ReportGeneration;
    default: return TaskFamily::MultipleChoice;
    }
}

AlignedPrediction null_prediction(const CanonicalLabelSpace& space) {
    const std::size_t n = std::max<std::size_t>(space.size(), 1);
    return AlignedPrediction{std::vector<double>(n, 1.0 / static_cast<double>(n)), true};
}

LabelAlignment LabelAlignment::identity(std::size_t n) {
    LabelAlignment a;
    for (std::size_t i = 0; i < n; ++i) a.preimage_of.push_back({i});
    return a;
}

Cost::Cost(double value) : value_(value) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw ContractViolation("cost " + std::to_string(value) + " outside [0, 1]");
    }
}

TaskId assign_task(const PromptDescriptor& descriptor, std::span<const TaskInfo> tasks) {
    const TaskFamily family = parse_family(descriptor.family);
    if (descriptor.world_task >= tasks.size()) {
        throw UnknownTask("task index " + std::to_string(descriptor.world_task) + " not in world");
    }
    const TaskInfo& info = tasks[descriptor.world_task];
    if (info.family != family) {
        throw UnknownTask("task " + std::to_string(info.id) + " is " + std::string(family_name(info.family)) +
                          ", prompt says " + descriptor.family);
    }
    return info.id;
}

bool validity(const Tool& tool, const Query& query) { return tool.supports(query.task); }

AlignedPrediction align(const Tool& tool, const TaskInfo& task, const RawPrediction& raw) {
    if (std::holds_alternative<Abstain>(raw) || !tool.supports(task.id)) return null_prediction(task.space);

    if (is_categorical(task.family)) {
        const auto* scores = std::get_if<CategoricalScores>(&raw);
        if (scores == nullptr) throw InvalidPrediction("categorical task expects class scores");
        auto it = tool.alignment.find(task.id);
        const LabelAlignment rho = it != tool.alignment.end() ? it->second : LabelAlignment::identity(task.space.size());
        if (scores->probs.size() != rho.tool_label_count()) {
            throw InvalidPrediction("prediction has " + std::to_string(scores->probs.size()) +
                                    " scores, tool label space has " + std::to_string(rho.tool_label_count()));
        }
        double total = 0.0;
        for (double p : scores->probs) {
            if (!(p >= 0.0)) throw InvalidPrediction("negative or NaN probability");
            total += p;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw InvalidPrediction("probabilities sum to " + std::to_string(total));
        }
        std::vector<double> canon(task.space.size(), 0.0);
        for (std::size_t l = 0; l < rho.tool_label_count(); ++l) {
            for (std::size_t y : rho.preimage_of[l]) {
                if (y >= canon.size()) throw InvalidPrediction("alignment maps outside canonical space");
                canon[y] += scores->probs[l];
            }
        }
        double z = 0.0;
        for (double v : canon) z += v;
        if (z <= 0.0) return null_prediction(task.space);
        for (double& v : canon) v /= z;
        return AlignedPrediction{std::move(canon), false};
    }

    if (task.family == TaskFamily::Grounding) {
        const auto* box = std::get_if<Box>(&raw);
        if (box == nullptr) throw InvalidPrediction("grounding task expects a box");
        return AlignedPrediction{*box, false};
    }
    const auto* pairs = std::get_if<FindingSet>(&raw);
    if (pairs == nullptr) throw InvalidPrediction("report task expects a finding set");
    return AlignedPrediction{*pairs, false};
}

std::size_t argmax_lowest(std::span<const double> values) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = i;
    return best;
}

Cost cost(TaskFamily family, const AlignedPrediction& pred, const GroundTruth& gt, ClassificationCost variant) {
    if (pred.is_null) throw ContractViolation("cost requested for a null prediction");
    if (family_of(gt) != family) throw ContractViolation("ground truth does not match task family");
    switch (family) {
    case TaskFamily::Classification: {
        const auto* probs = std::get_if<std::vector<double>>(&pred.payload);
        if (probs == nullptr) throw ContractViolation("classification cost needs a probability vector");
        const std::size_t y = std::get<ClassLabel>(gt).index;
        if (y >= probs->size()) throw ContractViolation("label outside canonical space");
        if (variant == ClassificationCost::ClippedCrossEntropy) {
            return Cost(std::min(1.0, -std::log(std::max((*probs)[y], 1e-12))));
        }
        return Cost(argmax_lowest(*probs) != y ? 1.0 : 0.0);
    }
    case TaskFamily::MultipleChoice: {
        const auto* probs = std::get_if<std::vector<double>>(&pred.payload);
        if (probs == nullptr) throw ContractViolation("multiple-choice cost needs option scores");
        return Cost(argmax_lowest(*probs) != std::get<OptionChoice>(gt).index ? 1.0 : 0.0);
    }
    case TaskFamily::Grounding: {
        const auto* box = std::get_if<Box>(&pred.payload);
        if (box == nullptr) throw ContractViolation("grounding cost needs a box");
        return Cost(std::clamp(1.0 - iou(*box, std::get<Box>(gt)), 0.0, 1.0));
    }
    case TaskFamily::ReportGeneration: {
        const auto* pairs = std::get_if<FindingSet>(&pred.payload);
        if (pairs == nullptr) throw ContractViolation("report cost needs a finding set");
        return Cost(std::clamp(1.0 - findings_f1(*pairs, std::get<FindingSet>(gt)), 0.0, 1.0));
    }
    }
    throw ContractViolation("unhandled task family");
}

std::string pair_label(const FindingPair& pair) { return pair.finding + "@" + pair.location; }

namespace {

std::vector<double> pair_indicator(const FindingSet& pairs, const CanonicalLabelSpace& space, std::size_t width) {
    std::vector<double> out(width, 0.0);
    for (const auto& p : pairs) {
        const std::string key = pair_label(p);
        auto it = std::find(space.labels.begin(), space.labels.end(), key);
        if (it == space.labels.end()) continue;
        const auto idx = static_cast<std::size_t>(it - space.labels.begin());
        if (idx < width) out[idx] = 1.0;
    }
    return out;
}

std::vector<double> box_vector(const Box& b, std::size_t width) {
    std::vector<double> out(width, 0.0);
    const double v[4] = {b.x1, b.y1, b.x2, b.y2};
    for (std::size_t i = 0; i < std::min<std::size_t>(4, width); ++i) out[i] = v[i];
    return out;
}

} // namespace

std::vector<double> prediction_slot(const AlignedPrediction& pred, const CanonicalLabelSpace& space, std::size_t width) {
    if (const auto* probs = std::get_if<std::vector<double>>(&pred.payload)) {
        std::vector<double> out(width, 0.0);
        std::copy_n(probs->begin(), std::min(width, probs->size()), out.begin());
        return out;
    }
    if (const auto* box = std::get_if<Box>(&pred.payload)) return box_vector(*box, width);
    return pair_indicator(std::get<FindingSet>(pred.payload), space, width);
}

std::vector<double> truth_encoding(const GroundTruth& gt, const CanonicalLabelSpace& space, std::size_t width) {
    if (const auto* box = std::get_if<Box>(&gt)) return box_vector(*box, width);
    if (const auto* pairs = std::get_if<FindingSet>(&gt)) return pair_indicator(*pairs, space, width);
    throw ContractViolation("truth_encoding is only defined for grounding and report ground truths");
}

} // namespace toolselect::domain
