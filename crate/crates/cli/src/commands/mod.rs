pub mod flow;
pub mod lossbound;
pub mod noise;
pub mod render;
pub mod spectrum;
pub mod teacher_student;

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use crate::config::typed;
use crate::error::CliResult;
use crate::output::OutputDir;
use crate::SubcommandKind;

fn echo<T: Serialize>(config: &T) -> Value {
    serde_json::to_value(config).expect("configs serialize")
}

/// Runs one subcommand and returns its fully resolved config.
pub fn dispatch(
    kind: SubcommandKind,
    value: Value,
    base_dir: &Path,
    out: &mut OutputDir,
) -> CliResult<Value> {
    match kind {
        SubcommandKind::TeacherStudent => {
            let c: teacher_student::TeacherStudentConfig = typed(value)?;
            teacher_student::run(&c, out)?;
            Ok(echo(&c))
        }
        SubcommandKind::Flow => {
            let c: mixdyn_core::teacher_student::FlowConfig = typed(value)?;
            flow::run(&c, out)?;
            Ok(echo(&c))
        }
        SubcommandKind::Noise => {
            let c: noise::NoiseConfig = typed(value)?;
            noise::run(&c, out)?;
            Ok(echo(&c))
        }
        SubcommandKind::Spectrum => {
            let c: spectrum::SpectrumConfig = typed(value)?;
            spectrum::run(&c, out)?;
            Ok(echo(&c))
        }
        SubcommandKind::Lossbound => {
            let c: lossbound::LossboundConfig = typed(value)?;
            lossbound::run(&c, out)?;
            Ok(echo(&c))
        }
        SubcommandKind::Render => {
            let mut c: render::RenderConfig = typed(value)?;
            c.csv = render::resolve(base_dir, &c.csv);
            render::run(&c, out)?;
            Ok(echo(&c))
        }
    }
}
