//! Planar polygonal domains: inner metric, boundary distance, meshes, inner
//! balls and inner-uniformity certificates.

pub mod ball;
pub mod domain;
pub mod mesh;
pub mod point;
pub mod uniformity;

pub use ball::{inner_ball, representative_point, InnerBall, RepresentativeRule};
pub use domain::{
    ambient_volume, load_domain, load_domain_json, DomainPoint, DomainSpec, GeodesicPath,
    PolygonDomain, SlitSide,
};
pub use mesh::{triangulate, triangulate_with, Grading, Mesh, MeshOptions, MeshStats};
pub use point::Point;
pub use uniformity::{certify_uniformity, certify_uniformity_with, CertifyOptions, UniformityCertificate, WitnessPair};
