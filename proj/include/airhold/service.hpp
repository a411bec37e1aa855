#pragma once

#include "airhold/features.hpp"
#include "airhold/gbdt.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace airhold {

// Everything a prediction needs, loaded once and never mutated.
struct ModelSnapshot {
    FeatureRegistry registry;
    RouteFeatureTable table;
    GbdtModel classifier;
    GbdtModel regressor;
    std::string classifier_version;
    std::string regressor_version;
};

std::shared_ptr<const ModelSnapshot> make_snapshot(WeightedDigraph graph, FeatureRegistry registry, GbdtModel classifier,
                                                   GbdtModel regressor, const KernelOptions& opt = {});

// Model directory layout: classifier.json, regressor.json, registry.json.
void save_model_dir(const std::string& dir, const FeatureRegistry& registry, const GbdtModel& classifier,
                    const GbdtModel& regressor);
std::shared_ptr<const ModelSnapshot> load_snapshot(const std::string& model_dir, const std::string& graph_path,
                                                   const KernelOptions& opt = {});

// A flight's inputs without labels. Coordinates and altitudes are filled in
// from the snapshot's airports.
struct ScenarioRequest {
    std::optional<std::string> id;
    FlightRecord inputs;
};

struct FieldError {
    std::string field;
    std::string message;
};

class RequestError : public Error {
public:
    explicit RequestError(std::vector<FieldError> fields);
    const std::vector<FieldError>& fields() const noexcept { return fields_; }

private:
    std::vector<FieldError> fields_;
};

// Throws RequestError listing every missing, mistyped, unknown or label field.
ScenarioRequest parse_scenario(std::string_view body);
ScenarioRequest scenario_from_record(const FlightRecord& r);
std::string scenario_to_json(const ScenarioRequest& req);

struct PredictionResponse {
    std::optional<std::string> id;
    double holding_probability = 0.0;
    double predicted_delay_s = 0.0;  // delay if a holding occurs
    bool unseen_route = false;
    EdgeGraphFeatures graph_features;
    std::string classifier_version;
    std::string regressor_version;
};

// Builds the feature row exactly as the batch pipeline does. Throws
// UnknownNodeError for an airport outside the network and RequestError for
// out-of-range inputs.
PredictionResponse predict_scenario(const ModelSnapshot& snap, const ScenarioRequest& req);
std::string response_to_json(const PredictionResponse& r);

inline constexpr std::size_t kMaxSimulateBatch = 10000;

struct HttpReply {
    int status = 200;
    std::string body;
};

HttpReply handle_health(const ModelSnapshot& snap);
HttpReply handle_network(const ModelSnapshot& snap);
HttpReply handle_importances(const ModelSnapshot& snap);
HttpReply handle_predict(const ModelSnapshot& snap, std::string_view body);
HttpReply handle_simulate(const ModelSnapshot& snap, std::string_view body);

// HTTP front end over one snapshot. CORS is open to any origin.
class Service {
public:
    explicit Service(std::shared_ptr<const ModelSnapshot> snapshot);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Port 0 picks a free port. Returns the bound port; throws Error("bind").
    int bind(const std::string& host, int port);
    // Serves until stop(); bind() must have succeeded.
    void run();
    // run() on a background thread.
    void start();
    void stop();
    int port() const { return port_; }

private:
    std::shared_ptr<const ModelSnapshot> snap_;
    std::unique_ptr<httplib::Server> server_;
    std::thread thread_;
    int port_ = -1;
};

}  // namespace airhold
