#pragma once

#include <cmath>
#include <string>
#include <variant>

#include <json.hpp>

#include "ensemblab/errors.hpp"

namespace ensemblab {

/// Registered diffusion coefficient forms for the drift-free Ito generator.
enum class DiffusionForm {
    LinearX,     ///< D(x) = x, reflected at x = 0
    OnePlusAbsX, ///< D(x) = 1 + |x|
    ScalingH,    ///< D(x,t) = t^{2H-1} * (1 + |x / t^H|)
    ExpT,        ///< D(t) = exp(gamma * t)
};

inline std::string to_string(DiffusionForm f) {
    switch (f) {
    case DiffusionForm::LinearX: return "linear_x";
    case DiffusionForm::OnePlusAbsX: return "one_plus_abs_x";
    case DiffusionForm::ScalingH: return "scaling_h";
    case DiffusionForm::ExpT: return "exp_t";
    }
    throw rejected_input("unknown diffusion form");
}

inline DiffusionForm diffusion_form_from_string(const std::string& id) {
    if (id == "linear_x") return DiffusionForm::LinearX;
    if (id == "one_plus_abs_x") return DiffusionForm::OnePlusAbsX;
    if (id == "scaling_h") return DiffusionForm::ScalingH;
    if (id == "exp_t") return DiffusionForm::ExpT;
    throw rejected_input("unregistered diffusion id '" + id +
                         "' (known: linear_x, one_plus_abs_x, scaling_h, exp_t)");
}

struct WienerSpec {
    double sigma = 1.0;

    void validate() const {
        if (!std::isfinite(sigma) || sigma <= 0.0)
            throw rejected_input("Wiener: sigma must be finite and > 0");
    }
    friend bool operator==(const WienerSpec&, const WienerSpec&) = default;
};

struct FbmSpec {
    double hurst = 0.5;
    double sigma = 1.0;

    void validate() const {
        if (!(hurst > 0.0 && hurst < 1.0))
            throw rejected_input("fBm: H must lie in (0,1), got " + std::to_string(hurst));
        if (!std::isfinite(sigma) || sigma <= 0.0)
            throw rejected_input("fBm: sigma must be finite and > 0");
    }
    friend bool operator==(const FbmSpec&, const FbmSpec&) = default;
};

struct ItoSpec {
    DiffusionForm form = DiffusionForm::OnePlusAbsX;
    double x0 = 0.0;
    double hurst = 0.5; ///< used by scaling_h
    double gamma = 1.0; ///< used by exp_t

    void validate() const {
        if (!std::isfinite(x0)) throw rejected_input("Ito: x0 must be finite");
        if (form == DiffusionForm::LinearX && !(x0 > 0.0))
            throw rejected_input("Ito linear_x: x0 must be > 0");
        if (form == DiffusionForm::ScalingH && !(hurst > 0.0 && hurst < 1.0))
            throw rejected_input("Ito scaling_h: H must lie in (0,1)");
        if (form == DiffusionForm::ExpT && !std::isfinite(gamma))
            throw rejected_input("Ito exp_t: gamma must be finite");
    }

    /// Diffusion coefficient. For scaling_h the caller clamps t away from 0.
    double diffusion(double x, double t) const {
        switch (form) {
        case DiffusionForm::LinearX: return x;
        case DiffusionForm::OnePlusAbsX: return 1.0 + std::abs(x);
        case DiffusionForm::ScalingH:
            return std::pow(t, 2.0 * hurst - 1.0) * (1.0 + std::abs(x / std::pow(t, hurst)));
        case DiffusionForm::ExpT: return std::exp(gamma * t);
        }
        throw rejected_input("unknown diffusion form");
    }
    friend bool operator==(const ItoSpec&, const ItoSpec&) = default;
};

struct OuSpec {
    double theta = 1.0;
    double sigma = 1.0;
    double x0 = 0.0;
    bool stationary_start = false;

    void validate() const {
        if (!std::isfinite(theta) || theta <= 0.0)
            throw rejected_input("OU: theta must be finite and > 0");
        if (!std::isfinite(sigma) || sigma <= 0.0)
            throw rejected_input("OU: sigma must be finite and > 0");
        if (!std::isfinite(x0)) throw rejected_input("OU: x0 must be finite");
    }

    double stationary_variance() const { return sigma * sigma / (2.0 * theta); }
    /// Stationary autocovariance R(T) = sigma^2/(2 theta) * exp(-theta |T|).
    double autocovariance(double lag) const {
        return stationary_variance() * std::exp(-theta * std::abs(lag));
    }
    friend bool operator==(const OuSpec&, const OuSpec&) = default;
};

using ProcessSpec = std::variant<WienerSpec, FbmSpec, ItoSpec, OuSpec>;

inline void validate(const ProcessSpec& spec) {
    std::visit([](const auto& s) { s.validate(); }, spec);
}

inline std::string kind_name(const ProcessSpec& spec) {
    struct V {
        std::string operator()(const WienerSpec&) const { return "wiener"; }
        std::string operator()(const FbmSpec&) const { return "fbm"; }
        std::string operator()(const ItoSpec&) const { return "ito"; }
        std::string operator()(const OuSpec&) const { return "ou"; }
    };
    return std::visit(V{}, spec);
}

// ---------------------------------------------------------------------------
// JSON wire format: {"kind": "...", "params": {...}}
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ProcessSpec& spec) {
    nlohmann::json params;
    struct V {
        nlohmann::json& p;
        void operator()(const WienerSpec& s) const { p["sigma"] = s.sigma; }
        void operator()(const FbmSpec& s) const {
            p["hurst"] = s.hurst;
            p["sigma"] = s.sigma;
        }
        void operator()(const ItoSpec& s) const {
            p["diffusion"] = to_string(s.form);
            p["x0"] = s.x0;
            if (s.form == DiffusionForm::ScalingH) p["hurst"] = s.hurst;
            if (s.form == DiffusionForm::ExpT) p["gamma"] = s.gamma;
        }
        void operator()(const OuSpec& s) const {
            p["theta"] = s.theta;
            p["sigma"] = s.sigma;
            p["x0"] = s.x0;
            p["stationary_start"] = s.stationary_start;
        }
    };
    std::visit(V{params}, spec);
    return nlohmann::json{{"kind", kind_name(spec)}, {"params", params}};
}

inline ProcessSpec process_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("kind"))
        throw rejected_input("process spec: expected {\"kind\":..., \"params\":...}");
    const std::string kind = j.at("kind").get<std::string>();
    const nlohmann::json params = j.value("params", nlohmann::json::object());
    ProcessSpec spec;
    try {
        if (kind == "wiener") {
            WienerSpec s;
            s.sigma = params.value("sigma", 1.0);
            spec = s;
        } else if (kind == "fbm") {
            FbmSpec s;
            s.hurst = params.at("hurst").get<double>();
            s.sigma = params.value("sigma", 1.0);
            spec = s;
        } else if (kind == "ito") {
            ItoSpec s;
            s.form = diffusion_form_from_string(params.at("diffusion").get<std::string>());
            s.x0 = params.value("x0", s.form == DiffusionForm::LinearX ? 1.0 : 0.0);
            s.hurst = params.value("hurst", 0.5);
            s.gamma = params.value("gamma", 1.0);
            spec = s;
        } else if (kind == "ou") {
            OuSpec s;
            s.theta = params.at("theta").get<double>();
            s.sigma = params.value("sigma", 1.0);
            s.x0 = params.value("x0", 0.0);
            s.stationary_start = params.value("stationary_start", false);
            spec = s;
        } else {
            throw rejected_input("process spec: unknown kind '" + kind + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw rejected_input("process spec '" + kind + "': " + e.what());
    }
    validate(spec);
    return spec;
}

} // namespace ensemblab
