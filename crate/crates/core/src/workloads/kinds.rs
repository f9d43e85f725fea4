use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractiveKind {
    GamePlay,
    OfficeEdit,
    WebBrowse,
    AudioRemix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    ArchiveExtract,
    BlenderRender,
    KernelCompile,
    LlmGenerate,
    DiskIo,
    NetworkTransfer,
    VideoRender,
}

/// Coarse resource group of a background kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceGroup {
    Cpu,
    Io,
    Network,
}

impl InteractiveKind {
    /// Catalog order.
    pub const ALL: [InteractiveKind; 4] = [
        InteractiveKind::GamePlay,
        InteractiveKind::OfficeEdit,
        InteractiveKind::WebBrowse,
        InteractiveKind::AudioRemix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InteractiveKind::GamePlay => "game_play",
            InteractiveKind::OfficeEdit => "office_edit",
            InteractiveKind::WebBrowse => "web_browse",
            InteractiveKind::AudioRemix => "audio_remix",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            InteractiveKind::GamePlay => "Game Play",
            InteractiveKind::OfficeEdit => "Office File Editing",
            InteractiveKind::WebBrowse => "Web Browsing",
            InteractiveKind::AudioRemix => "Audio Remix",
        }
    }
}

impl BackgroundKind {
    pub const ALL: [BackgroundKind; 7] = [
        BackgroundKind::ArchiveExtract,
        BackgroundKind::BlenderRender,
        BackgroundKind::KernelCompile,
        BackgroundKind::LlmGenerate,
        BackgroundKind::DiskIo,
        BackgroundKind::NetworkTransfer,
        BackgroundKind::VideoRender,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BackgroundKind::ArchiveExtract => "archive_extract",
            BackgroundKind::BlenderRender => "blender_render",
            BackgroundKind::KernelCompile => "kernel_compile",
            BackgroundKind::LlmGenerate => "llm_generate",
            BackgroundKind::DiskIo => "disk_io",
            BackgroundKind::NetworkTransfer => "network_transfer",
            BackgroundKind::VideoRender => "video_render",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            BackgroundKind::ArchiveExtract => "Archive Extraction",
            BackgroundKind::BlenderRender => "Blender Render",
            BackgroundKind::KernelCompile => "Kernel Compile",
            BackgroundKind::LlmGenerate => "LLM Generate",
            BackgroundKind::DiskIo => "Disk IO",
            BackgroundKind::NetworkTransfer => "Network Transfer",
            BackgroundKind::VideoRender => "Video Render",
        }
    }

    pub fn group(self) -> ResourceGroup {
        match self {
            BackgroundKind::BlenderRender
            | BackgroundKind::KernelCompile
            | BackgroundKind::LlmGenerate
            | BackgroundKind::VideoRender => ResourceGroup::Cpu,
            BackgroundKind::ArchiveExtract | BackgroundKind::DiskIo => ResourceGroup::Io,
            BackgroundKind::NetworkTransfer => ResourceGroup::Network,
        }
    }
}

impl ResourceGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            ResourceGroup::Cpu => "cpu",
            ResourceGroup::Io => "io",
            ResourceGroup::Network => "network",
        }
    }
}

macro_rules! string_enum {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $t {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                <$t>::ALL
                    .iter()
                    .copied()
                    .find(|k| k.as_str() == s)
                    .ok_or_else(|| Error::UnknownScenario(s.to_string()))
            }
        }
    };
}

string_enum!(InteractiveKind);
string_enum!(BackgroundKind);

/// Label granularity for classification.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMode {
    /// One class per canonical scenario (28 classes).
    #[default]
    Scenario,
    /// Interactive kind crossed with background resource group (12 classes).
    Coarse,
}

/// Class label of a canonical pairing.
pub fn label_for(mode: LabelMode, interactive: InteractiveKind, background: BackgroundKind) -> String {
    match mode {
        LabelMode::Scenario => scenario_id_of(interactive, background),
        LabelMode::Coarse => format!("{}/{}", interactive.as_str(), background.group().as_str()),
    }
}

/// One row of the canonical catalog.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioDescriptor {
    pub scenario_id: String,
    pub interactive_kind: InteractiveKind,
    pub background_kind: BackgroundKind,
    pub title: String,
}

pub fn scenario_id_of(interactive: InteractiveKind, background: BackgroundKind) -> String {
    let i = InteractiveKind::ALL.iter().position(|&k| k == interactive).unwrap_or(0);
    let b = BackgroundKind::ALL.iter().position(|&k| k == background).unwrap_or(0);
    format!("S{}", i * BackgroundKind::ALL.len() + b + 1)
}

/// The 28 canonical scenarios, S1 through S28.
pub fn catalog() -> Vec<ScenarioDescriptor> {
    let mut out = Vec::with_capacity(28);
    for ik in InteractiveKind::ALL {
        for bk in BackgroundKind::ALL {
            out.push(ScenarioDescriptor {
                scenario_id: scenario_id_of(ik, bk),
                interactive_kind: ik,
                background_kind: bk,
                title: format!("{} & {}", ik.title(), bk.title()),
            });
        }
    }
    out
}

pub fn descriptor(scenario_id: &str) -> Result<ScenarioDescriptor> {
    catalog()
        .into_iter()
        .find(|d| d.scenario_id == scenario_id)
        .ok_or_else(|| Error::UnknownScenario(scenario_id.to_string()))
}
