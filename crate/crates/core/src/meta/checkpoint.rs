use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::StudentTeacherState;
use crate::error::{invalid, Result};
use crate::labelers::{Activation, Net};

/// Named parameter tensor; `data` is row-major with the given shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// JSON container: `{"step", "activation", "tensors": [{"name", "shape", "data"}]}`.
/// Tensor names are `<net>.<layer>.weight` (shape `[out, in]`) and
/// `<net>.<layer>.bias` (shape `[out]`), with `<net>` either `student` or
/// `teacher<k>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub step: usize,
    pub activation: Activation,
    pub tensors: Vec<NamedTensor>,
}

fn push_net(out: &mut Vec<NamedTensor>, prefix: &str, net: &Net) {
    let mut off = 0;
    for (l, w) in net.sizes.windows(2).enumerate() {
        let (i, o) = (w[0], w[1]);
        out.push(NamedTensor {
            name: format!("{prefix}.{l}.weight"),
            shape: vec![o, i],
            data: net.params[off..off + o * i].to_vec(),
        });
        off += o * i;
        out.push(NamedTensor {
            name: format!("{prefix}.{l}.bias"),
            shape: vec![o],
            data: net.params[off..off + o].to_vec(),
        });
        off += o;
    }
}

fn take_net(tensors: &[NamedTensor], prefix: &str, act: Activation) -> Result<Net> {
    let mut sizes = Vec::new();
    let mut params = Vec::new();
    for l in 0.. {
        let find = |kind: &str| {
            tensors
                .iter()
                .find(|t| t.name == format!("{prefix}.{l}.{kind}"))
        };
        let (Some(w), Some(b)) = (find("weight"), find("bias")) else {
            break;
        };
        let (&[o, i], &[ob]) = (w.shape.as_slice(), b.shape.as_slice()) else {
            return invalid(format!("bad tensor shapes in layer {l} of {prefix}"));
        };
        if ob != o
            || w.data.len() != o * i
            || b.data.len() != o
            || sizes.last().is_some_and(|&p| p != i)
        {
            return invalid(format!("inconsistent layer {l} of {prefix}"));
        }
        if sizes.is_empty() {
            sizes.push(i);
        }
        sizes.push(o);
        params.extend_from_slice(&w.data);
        params.extend_from_slice(&b.data);
    }
    if sizes.len() < 2 {
        return invalid(format!("no layers for {prefix}"));
    }
    let mut net = Net::new(sizes, act, 0)?;
    net.params = params;
    Ok(net)
}

impl Checkpoint {
    pub fn from_state(state: &StudentTeacherState) -> Self {
        let mut tensors = Vec::new();
        push_net(&mut tensors, "student", &state.student);
        for (k, t) in state.teachers.iter().enumerate() {
            push_net(&mut tensors, &format!("teacher{k}"), t);
        }
        Self {
            step: state.step,
            activation: state.student.act,
            tensors,
        }
    }

    pub fn to_state(&self) -> Result<StudentTeacherState> {
        let student = take_net(&self.tensors, "student", self.activation)?;
        let mut teachers = Vec::new();
        while self
            .tensors
            .iter()
            .any(|t| t.name.starts_with(&format!("teacher{}.", teachers.len())))
        {
            teachers.push(take_net(
                &self.tensors,
                &format!("teacher{}", teachers.len()),
                self.activation,
            )?);
        }
        let mut s = StudentTeacherState::new(student, teachers)?;
        s.step = self.step;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub step: usize,
    pub student_loss: f64,
    pub teacher_losses: Vec<f64>,
    pub lambda: f64,
}

/// `step,student_loss,teacher_0_loss,...,lambda`; appends when the file exists.
pub fn write_loss_curve(rows: &[CurveRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let k = rows
        .iter()
        .map(|r| r.teacher_losses.len())
        .max()
        .unwrap_or(0);
    let fresh = !path.exists();
    let mut out = std::io::BufWriter::new(
        std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?,
    );
    if fresh {
        let mut head = vec!["step".to_string(), "student_loss".to_string()];
        head.extend((0..k).map(|i| format!("teacher_{i}_loss")));
        head.push("lambda".into());
        writeln!(out, "{}", head.join(","))?;
    }
    for r in rows {
        let mut cells = vec![r.step.to_string(), r.student_loss.to_string()];
        cells.extend((0..k).map(|i| {
            r.teacher_losses
                .get(i)
                .map_or(String::new(), f64::to_string)
        }));
        cells.push(r.lambda.to_string());
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}
