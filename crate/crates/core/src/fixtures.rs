//! Reference workflows over the bundled registries, built directly from
//! graph edits (not through the action parser).

use serde_json::{json, Value};

use crate::edit::{GraphEdit, PortRef};
use crate::graph::WorkflowGraph;
use crate::schema::SchemaRegistry;

fn build(
    registry: &SchemaRegistry,
    nodes: &[(&str, &[(&str, Value)])],
    edges: &[(&str, &str)],
) -> WorkflowGraph {
    let mut g = WorkflowGraph::empty();
    for (type_name, params) in nodes {
        let params = params.iter().map(|(k, v)| (k.to_string(), v.clone()));
        g = g
            .apply_edit(&GraphEdit::add_node_with(*type_name, params), registry)
            .expect("fixture node applies");
    }
    for (src, dst) in edges {
        let edit = GraphEdit::add_edge(src.parse().unwrap(), dst.parse().unwrap());
        g = g.apply_edit(&edit, registry).expect("fixture edge applies");
    }
    g
}

/// Seven-node text-to-image workflow over `mini-sd` (six distinct types).
pub fn text_to_image(registry: &SchemaRegistry) -> WorkflowGraph {
    build(
        registry,
        &[
            ("CheckpointLoader", &[]),
            ("EmptyLatent", &[]),
            ("TextEncode", &[("text", json!("a lighthouse at dusk"))]),
            ("TextEncode", &[("text", json!("blurry"))]),
            ("Sampler", &[("steps", json!(20))]),
            ("Decode", &[]),
            ("SaveImage", &[]),
        ],
        &[
            ("checkpointloader_0.model", "sampler_0.model"),
            ("checkpointloader_0.clip", "textencode_0.clip"),
            ("checkpointloader_0.clip", "textencode_1.clip"),
            ("textencode_0.conditioning", "sampler_0.positive"),
            ("textencode_1.conditioning", "sampler_0.negative"),
            ("emptylatent_0.latent", "sampler_0.latent"),
            ("sampler_0.latent", "decode_0.samples"),
            ("checkpointloader_0.vae", "decode_0.vae"),
            ("decode_0.image", "saveimage_0.images"),
        ],
    )
}

/// Action program that builds [`text_to_image`], one node per line.
pub const TEXT_TO_IMAGE_LINES: [&str; 7] = [
    "checkpointloader_0_model, checkpointloader_0_clip, checkpointloader_0_vae = CheckpointLoader()",
    "emptylatent_0_latent = EmptyLatent()",
    "textencode_0_conditioning = TextEncode(text=\"a lighthouse at dusk\", clip=checkpointloader_0_clip)",
    "textencode_1_conditioning = TextEncode(text=\"blurry\", clip=checkpointloader_0_clip)",
    "sampler_0_latent = Sampler(steps=20, model=checkpointloader_0_model, positive=textencode_0_conditioning, negative=textencode_1_conditioning, latent=emptylatent_0_latent)",
    "decode_0_image = Decode(samples=sampler_0_latent, vae=checkpointloader_0_vae)",
    "SaveImage(images=decode_0_image)",
];

/// Smallest executable `mini-sd` workflow: decode an empty latent and save it.
pub fn decode_empty_latent(registry: &SchemaRegistry) -> WorkflowGraph {
    build(
        registry,
        &[
            ("CheckpointLoader", &[]),
            ("EmptyLatent", &[]),
            ("Decode", &[]),
            ("SaveImage", &[]),
        ],
        &[
            ("emptylatent_0.latent", "decode_0.samples"),
            ("checkpointloader_0.vae", "decode_0.vae"),
            ("decode_0.image", "saveimage_0.images"),
        ],
    )
}

/// Image-to-image workflow over `mini-edit`, using Encode as the
/// IMAGE -> LATENT adapter.
pub fn image_to_image(registry: &SchemaRegistry) -> WorkflowGraph {
    build(
        registry,
        &[
            ("CheckpointLoader", &[]),
            ("LoadImage", &[]),
            ("Encode", &[]),
            ("TextEncode", &[("text", json!("oil painting"))]),
            ("TextEncode", &[("text", json!("lowres"))]),
            ("Sampler", &[("steps", json!(30)), ("cfg", json!(5.5))]),
            ("Decode", &[]),
            ("SaveImage", &[("filename_prefix", json!("edit"))]),
        ],
        &[
            ("loadimage_0.image", "encode_0.pixels"),
            ("checkpointloader_0.vae", "encode_0.vae"),
            ("checkpointloader_0.clip", "textencode_0.clip"),
            ("checkpointloader_0.clip", "textencode_1.clip"),
            ("checkpointloader_0.model", "sampler_0.model"),
            ("textencode_0.conditioning", "sampler_0.positive"),
            ("textencode_1.conditioning", "sampler_0.negative"),
            ("encode_0.latent", "sampler_0.latent"),
            ("sampler_0.latent", "decode_0.samples"),
            ("checkpointloader_0.vae", "decode_0.vae"),
            ("decode_0.image", "saveimage_0.images"),
        ],
    )
}

/// All executable reference workflows paired with their registries.
pub fn executable_fixtures() -> Vec<(SchemaRegistry, WorkflowGraph)> {
    let sd = SchemaRegistry::bundled("mini-sd").expect("bundled");
    let edit = SchemaRegistry::bundled("mini-edit").expect("bundled");
    vec![
        (sd.clone(), text_to_image(&sd)),
        (sd.clone(), decode_empty_latent(&sd)),
        (edit.clone(), text_to_image(&edit)),
        (edit.clone(), image_to_image(&edit)),
    ]
}

pub fn port(s: &str) -> PortRef {
    s.parse().expect("fixture port ref")
}
